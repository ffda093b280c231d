"""Moment problems shared by the solver tests and the acceptance suite."""
from rotund.integrands import catalog_get
from rotund.maxent import MomentProblem, load_problem
from rotund.measure import MeasureSpace, TestFunctional as G


def small_problems() -> list:
    """Boltzmann-Shannon and Fermi-Dirac problems on at most 64 cells."""
    bs, fd = catalog_get("boltzmann_shannon"), catalog_get("fermi_dirac")
    u = MeasureSpace.uniform
    return [
        load_problem("builtin:bs_mean"),
        load_problem("builtin:bs_trig"),
        load_problem("builtin:fd_window"),
        MomentProblem(bs, u((0, 1), 32), [(G.constant(1.0), 2.0), (G.trig(1, "sin"), 0.4),
                                          (G.indicator([0.5], [1.0]), 0.7)], "bs_sin_window"),
        MomentProblem(fd, u((0, 1), 48), [(G.constant(1.0), 0.5), (G.trig(1), 0.1), (G.trig(2, "sin"), -0.05)],
                      "fd_trig"),
        MomentProblem(fd, u((0, 2), 64), [(G.trig(1), 0.2), (G.indicator([0.0], [0.5]), 0.3)], "fd_wide"),
        MomentProblem(bs, MeasureSpace.from_breakpoints([0.1, 0.3, 0.35, 0.9]),
                      [(G.constant(1.0), 1.0), (G.trig(1), -0.2)], "bs_irregular"),
    ]

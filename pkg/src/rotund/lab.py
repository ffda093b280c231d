"""Counterexample sequences and convergence diagnostics.

Every family member is an exact simple function on [0, 1], so each
diagnostic (integral value, L1 distance, deviation measure, weak gap,
uniform-integrability tail) is a finite sum.  Verdicts are computed from
the measured rows only; the family's declared properties are reported
beside them for comparison but never consulted.

Decision rules for a metric m_n that should tend to 0:

* holds  - the last value is below 1e-3, or the family supplies a
           vanishing closed-form rate r(n), the last value is at most
           10 r(n) and the metric does not increase over the last rows;
* fails  - the metric is >= 0.1 on each of the last three rows;
* inconclusive otherwise.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import HypothesisViolation, UnknownNameError
from .integrands import Integrand
from .measure import (MeasureSpace, SimpleFunction, TestFunctional, composition_distance, deviation_measure,
                      fsum, integral_functional, l1_distance, trig_dictionary, weak_gap)

HOLD_ABS = 1e-3
HOLD_FACTOR = 10.0
FAIL_LEVEL = 0.1
DEFAULT_SCHEDULE = (10, 100, 1000, 10_000, 1_000_000)
DEFAULT_ETAS = (0.1, 0.5, 1.0)
DEFAULT_UI = (1.0, 10.0, 100.0)

PROPERTIES = ("converges_in_measure", "l1_convergent", "weakly_convergent_surrogate", "value_convergent")


def default_dictionary() -> list:
    return trig_dictionary(4) + [TestFunctional.indicator([0.0], [0.5]), TestFunctional.indicator([0.5], [1.0])]


@dataclass(frozen=True)
class SequenceFamily:
    """x_n = generator(n) for n >= 1, with limit candidate ``limit``.

    ``declared`` maps property names (``value_convergent`` keyed as
    ``value_convergent:<integrand>``) to the expected truth value.
    ``rates`` maps metric names (``deviation``, ``l1``, ``weak_gap``,
    ``composition:<integrand>``, ``value_gap:<integrand>``) to closed-form
    predictions r(n) that tend to 0.
    """

    name: str
    generator: Callable[[int], SimpleFunction]
    limit: SimpleFunction
    declared: dict = field(default_factory=dict)
    rates: dict = field(default_factory=dict)
    description: str = ""
    default_schedule: tuple = DEFAULT_SCHEDULE

    def __call__(self, n: int) -> SimpleFunction:
        if int(n) < 1:
            raise ValueError("family members are indexed from n = 1")
        x = self.generator(int(n))
        if x.space.box != self.limit.space.box:
            raise ValueError(f"{self.name}: member {n} lives on {x.space.box}, limit on {self.limit.space.box}")
        return x


def _spike(height: float, width: float, base: float) -> SimpleFunction:
    """height on [0, width], base on (width, 1]."""
    if width >= 1.0:
        return SimpleFunction.constant(MeasureSpace.uniform((0.0, 1.0), 1), [height])
    return SimpleFunction.step([width], [height, base])


def _const(v: float) -> SimpleFunction:
    return SimpleFunction.constant(MeasureSpace.uniform((0.0, 1.0), 1), [v])


def _exlbr_width(n: int) -> float:
    return 1.0 / (1.0 + math.log(n))


def _rademacher(n: int, center: float, amplitude: float) -> SimpleFunction:
    if n > 24:
        raise ValueError("rademacher members are limited to n <= 24 (2^n cells)")
    cells = 2 ** n
    signs = np.where(np.arange(cells) % 2 == 0, 1.0, -1.0)
    return SimpleFunction(MeasureSpace.uniform((0.0, 1.0), cells), center + amplitude * signs)


def family(name: str, **options) -> SequenceFamily:
    """Named families; ``rademacher`` accepts ``center`` and ``amplitude``."""
    if name == "exlbr2":
        return SequenceFamily(
            "exlbr2", lambda n: _spike(n, _exlbr_width(n), 1.0), _const(math.e),
            declared={"converges_in_measure": False, "l1_convergent": False,
                      "weakly_convergent_surrogate": False, "value_convergent:burg": True},
            rates={"value_gap:burg": lambda n: 1.0 / (1.0 + math.log(n))},
            description="n on [0, 1/(1+log n)], 1 elsewhere; limit e")
    if name == "exlbr3":
        return SequenceFamily(
            "exlbr3", lambda n: _spike(n, _exlbr_width(n), 1.0), _const(1.0),
            declared={"converges_in_measure": True, "l1_convergent": False,
                      "weakly_convergent_surrogate": False, "value_convergent:burg": False},
            rates={"deviation": lambda n: 1.0 / (1.0 + math.log(n))},
            description="n on [0, 1/(1+log n)], 1 elsewhere; limit 1")
    if name == "incompat":
        return SequenceFamily(
            "incompat", lambda n: _spike(n, 1.0 / n, 1.0), _const(1.0),
            declared={"converges_in_measure": True, "l1_convergent": False,
                      "weakly_convergent_surrogate": False, "value_convergent:burg_plus_linear": False,
                      "value_convergent:clipped_norm": True},
            rates={"deviation": lambda n: 1.0 / n, "composition:clipped_norm": lambda n: 0.0},
            description="n on [0, 1/n], 1 elsewhere; limit 1")
    if name == "burg_level_escape":
        return SequenceFamily(
            "burg_level_escape", lambda n: _spike(n, 1.0 / n, 1.0), _const(1.0),
            declared={"converges_in_measure": True, "l1_convergent": False,
                      "weakly_convergent_surrogate": False, "value_convergent:burg": True},
            rates={"deviation": lambda n: 1.0 / n, "value_gap:burg": lambda n: math.log(n) / n},
            description="n on [0, 1/n], 1 elsewhere; bounded Burg values, mass escaping to a spike",
            default_schedule=(100, 10_000))
    if name == "rademacher":
        center = float(options.get("center", 1.0))
        amplitude = float(options.get("amplitude", 0.5))
        if options.get("decay"):
            # center + (amplitude/n) r_n: converges strongly
            rates = {"l1": lambda n: amplitude / n, "weak_gap": lambda n: amplitude / n,
                     "deviation": lambda n: 0.0 if amplitude / n < DEFAULT_ETAS[0] else 1.0}
            phi = options.get("integrand")
            if phi is not None:
                def midpoint_gap(n, phi=phi):
                    a = amplitude / n
                    v = phi.value(np.array([center - a, center, center + a]))
                    return abs(0.5 * (v[0] + v[2]) - v[1])
                rates[f"value_gap:{phi.name}"] = midpoint_gap
            return SequenceFamily(
                "rademacher_decay", lambda n: _rademacher(n, center, amplitude / n), _const(center),
                declared={"converges_in_measure": True, "l1_convergent": True,
                          "weakly_convergent_surrogate": True},
                rates=rates, description=f"{center} + ({amplitude}/n) r_n",
                default_schedule=(2, 4, 8, 12, 16))
        return SequenceFamily(
            "rademacher", lambda n: _rademacher(n, center, amplitude), _const(center),
            declared={"converges_in_measure": False, "l1_convergent": False,
                      "weakly_convergent_surrogate": True, "value_convergent:burg": False},
            description=f"{center} + {amplitude} r_n with r_n the n-th Rademacher function",
            default_schedule=(2, 4, 8, 12, 16))
    if name == "spike_preservation":
        return SequenceFamily(
            "spike_preservation", lambda n: _spike(5.0, 1.0 / n, 0.5), _const(0.5),
            declared={"converges_in_measure": True, "l1_convergent": True,
                      "weakly_convergent_surrogate": True, "value_convergent:clipped_norm": True},
            rates={"deviation": lambda n: 1.0 / n, "l1": lambda n: 4.5 / n, "weak_gap": lambda n: 4.5 / n,
                   "composition:clipped_norm": lambda n: 0.5 / n, "value_gap:clipped_norm": lambda n: 0.5 / n},
            description="5 on [0, 1/n], 0.5 elsewhere; limit 0.5")
    raise UnknownNameError(f"unknown family {name!r}; known: {', '.join(FAMILY_NAMES)}")


FAMILY_NAMES = ("exlbr2", "exlbr3", "incompat", "burg_level_escape", "rademacher", "spike_preservation")


def constant_family(x: SimpleFunction, name: str = "constant") -> SequenceFamily:
    """x_n = x for every n."""
    zero = {"deviation": lambda n: 0.0, "l1": lambda n: 0.0, "weak_gap": lambda n: 0.0}
    return SequenceFamily(name, lambda n: x, x, declared={p: True for p in PROPERTIES[:3]}, rates=zero,
                          description="constant sequence", default_schedule=(1, 10, 100))


def scaled_family(value: float = math.e, name: str = "scaled") -> SequenceFamily:
    """x_n = value (1 + 1/n), limit value."""
    return SequenceFamily(
        name, lambda n: _const(value * (1.0 + 1.0 / n)), _const(value),
        declared={"converges_in_measure": True, "l1_convergent": True, "weakly_convergent_surrogate": True},
        rates={"l1": lambda n: value / n, "weak_gap": lambda n: value / n,
               "composition:burg": lambda n: math.log1p(1.0 / n)},
        description=f"{value} (1 + 1/n)", default_schedule=(10, 100, 1000, 10_000))


# ---------------------------------------------------------------------------
# verdicts


def _slope(ns: Sequence[int], vals: Sequence[float]) -> Optional[float]:
    pts = [(math.log(n), math.log(v)) for n, v in zip(ns, vals) if v > 0 and n > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    if np.ptp(x) == 0:
        return None
    return float(np.polyfit(x, y, 1)[0])


def judge(ns: Sequence[int], vals: Sequence[float], rate: Optional[Callable] = None) -> dict:
    """Apply the decision rules to a metric that should tend to 0."""
    vals = [float(v) for v in vals]
    last = vals[-1]
    tail = vals[-3:]
    predicted = float(rate(ns[-1])) if rate is not None else None
    non_increasing = all(b <= a * (1 + 1e-12) + 1e-15 for a, b in zip(tail, tail[1:]))
    if last < HOLD_ABS:
        verdict, reason = "holds", f"final value {last:.3g} < {HOLD_ABS:g}"
    elif predicted is not None and last <= HOLD_FACTOR * predicted and non_increasing:
        verdict, reason = "holds", f"final value {last:.3g} within {HOLD_FACTOR:g}x of vanishing rate {predicted:.3g}"
    elif all(v >= FAIL_LEVEL for v in tail):
        verdict, reason = "fails", f"last {len(tail)} values >= {FAIL_LEVEL:g}"
    else:
        verdict, reason = "inconclusive", "neither rule applies"
    return {"verdict": verdict, "final": last, "predicted": predicted,
            "slope": _slope(ns, vals), "reason": reason}


@dataclass
class ConvergenceRow:
    n: int
    value: float
    value_gap: float
    l1: float
    composition: float
    deviation: dict
    weak_gap: float
    ui_tail: dict
    l1_norm: float


@dataclass
class ConvergenceReport:
    family: str
    integrand: str
    limit_value: float
    rows: list
    verdicts: dict
    ui_profile: list
    etas: tuple

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def deviation_column(self, eta: float) -> list:
        return [r.deviation[eta] for r in self.rows]

    CSV_COLUMNS = ("n", "value", "limit_value", "value_gap", "l1", "composition", "weak_gap", "l1_norm")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = list(self.CSV_COLUMNS) + [f"deviation_{e:g}" for e in self.etas]
        header += [f"ui_tail_{m:g}" for m in (self.ui_profile and [r["threshold"] for r in self.ui_profile])]
        w.writerow(header)
        for r in self.rows:
            w.writerow([r.n, repr(r.value), repr(self.limit_value), repr(r.value_gap), repr(r.l1),
                        repr(r.composition), repr(r.weak_gap), repr(r.l1_norm)]
                       + [repr(r.deviation[e]) for e in self.etas]
                       + [repr(v) for v in r.ui_tail.values()])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "integrand": self.integrand,
            "limit_value": self.limit_value,
            "rows": [r.__dict__ for r in self.rows],
            "verdicts": self.verdicts,
            "ui_profile": self.ui_profile,
        }


def _check_schedule(schedule) -> list:
    schedule = [int(n) for n in schedule]
    if not schedule:
        raise ValueError("empty schedule")
    if any(b <= a for a, b in zip(schedule, schedule[1:])) or schedule[0] < 1:
        raise ValueError("schedule must be strictly increasing positive integers")
    return schedule


def run(fam: SequenceFamily, phi: Integrand, n_schedule: Optional[Sequence[int]] = None,
        dictionary: Optional[Sequence[TestFunctional]] = None, *, etas: Sequence[float] = DEFAULT_ETAS,
        ui_thresholds: Sequence[float] = DEFAULT_UI) -> ConvergenceReport:
    """Tabulate every diagnostic along the schedule and judge each property."""
    schedule = _check_schedule(n_schedule if n_schedule is not None else fam.default_schedule)
    if phi.dimension != fam.limit.d:
        raise ValueError("integrand and family have different dimensions")
    dictionary = list(dictionary) if dictionary is not None else default_dictionary()
    etas = tuple(sorted(float(e) for e in etas))
    x = fam.limit
    limit_value = integral_functional(phi, x)
    rows, members = [], []
    for n in schedule:
        xn = fam(n)
        members.append(xn)
        val = integral_functional(phi, xn)
        gap = abs(val - limit_value) if math.isfinite(val) and math.isfinite(limit_value) else math.inf
        comp = composition_distance(phi, xn, x) if math.isfinite(val) and math.isfinite(limit_value) else math.inf
        norms = xn.norms()
        rows.append(ConvergenceRow(
            n=n, value=val, value_gap=gap, l1=l1_distance(xn, x), composition=comp,
            deviation={e: deviation_measure(xn, x, e) for e in etas},
            weak_gap=weak_gap(xn, x, dictionary),
            ui_tail={m: fsum(xn.space.weights * np.where(norms > m, norms, 0.0)) for m in ui_thresholds},
            l1_norm=xn.l1_norm()))

    def rate(key):
        return fam.rates.get(key)

    measured = {
        "converges_in_measure": ([r.deviation[etas[0]] for r in rows], rate("deviation")),
        "l1_convergent": ([r.l1 for r in rows], rate("l1")),
        "weakly_convergent_surrogate": ([r.weak_gap for r in rows], rate("weak_gap")),
        f"value_convergent:{phi.name}": ([r.value_gap for r in rows], rate(f"value_gap:{phi.name}")),
        f"composition_convergent:{phi.name}": ([r.composition for r in rows], rate(f"composition:{phi.name}")),
    }
    verdicts = {}
    for prop, (vals, r) in measured.items():
        v = judge(schedule, vals, r)
        v["declared"] = fam.declared.get(prop)
        verdicts[prop] = v
    ui_profile = []
    for m in ui_thresholds:
        tails = [row.ui_tail[m] for row in rows]
        j = int(np.argmax(tails))
        ui_profile.append({"threshold": float(m), "sup": tails[j], "argmax_n": schedule[j]})
    return ConvergenceReport(fam.name, phi.name, limit_value, rows, verdicts, ui_profile, etas)


# ---------------------------------------------------------------------------
# preservation checks


@dataclass
class PreservationReport:
    kind: str
    integrand: str
    family: str
    rows: list
    verdict: dict
    bound_ok: bool
    measure_verdict: dict

    @property
    def passed(self) -> bool:
        return self.verdict["verdict"] == "holds" and self.bound_ok

    def to_dict(self) -> dict:
        return {"kind": self.kind, "integrand": self.integrand, "family": self.family, "rows": self.rows,
                "verdict": self.verdict, "bound_ok": self.bound_ok, "passed": self.passed,
                "measure_verdict": self.measure_verdict}


EPS_GRID = (1e-9, 1e-6, 1e-3, 1e-2, 0.1, 0.5, 1.0)


def _best_bound(xn: SimpleFunction, x: SimpleFunction, M: float, delta: float, total: float, eps_grid) -> tuple:
    """min over eps of 2 M mu(T_eps) + delta eps mu(S), T_eps = {|x_n - x| >= eps}."""
    best = (math.inf, None, None)
    for eps in eps_grid:
        t = deviation_measure(xn, x, eps)
        b = 2.0 * M * t + delta * eps * total
        if b < best[0]:
            best = (b, eps, t)
    return best


def _measure_from_data(fam, schedule, eta) -> dict:
    members = [fam(n) for n in schedule]
    dev = [deviation_measure(xn, fam.limit, eta) for xn in members]
    return judge(schedule, dev, fam.rates.get("deviation"))


def _preservation(kind: str, phi: Integrand, fam: SequenceFamily, n_schedule, eps_grid, eta) -> PreservationReport:
    schedule = _check_schedule(n_schedule if n_schedule is not None else fam.default_schedule)
    mv = _measure_from_data(fam, schedule, eta)
    if mv["verdict"] != "holds":
        raise HypothesisViolation(
            f"{fam.name} is not seen to converge in measure on this schedule ({mv['reason']})")
    x = fam.limit
    M = phi.value_bound
    delta = phi.clarke_bound
    total = x.space.total_measure
    lim_val = integral_functional(phi, x)
    rows, metric, ok = [], [], True
    for n in schedule:
        xn = fam(n)
        if kind == "II" and not bool(np.all(phi.domain.contains(xn.values))):
            raise HypothesisViolation(f"member {n} leaves dom {phi.name}")
        comp = composition_distance(phi, xn, x)
        gap = abs(integral_functional(phi, xn) - lim_val)
        row = {"n": n, "composition": comp, "value_gap": gap}
        if delta is not None:
            bound, eps, t = _best_bound(xn, x, M, delta, total, eps_grid)
            checked = comp if kind == "I" else gap
            row.update({"bound": bound, "eps": eps, "mu_T": t, "within_bound": checked <= bound * (1 + 1e-12)})
            ok = ok and row["within_bound"]
        rows.append(row)
        metric.append(comp if kind == "I" else gap)
    key = "composition" if kind == "I" else "value_gap"
    verdict = judge(schedule, metric, fam.rates.get(f"{key}:{phi.name}"))
    return PreservationReport(kind, phi.name, fam.name, rows, verdict, ok, mv)


def preservation_check_I(phi: Integrand, fam: SequenceFamily, n_schedule=None, *,
                         eps_grid=EPS_GRID, eta: float = DEFAULT_ETAS[0]) -> PreservationReport:
    """Bounded continuous phi: measure convergence should carry over to
    the integral of |phi(x_n) - phi(x)|.  Refuses unless |phi| <= M on all
    of R^d.  When a Lipschitz constant is known, each row is also checked
    against 2 M mu(T) + delta eps mu(S)."""
    if phi.value_bound is None or phi.bound_scope != "space":
        raise HypothesisViolation(f"{phi.name} is not bounded on the whole space; the check does not apply")
    return _preservation("I", phi, fam, n_schedule, eps_grid, eta)


def preservation_check_II(phi: Integrand, fam: SequenceFamily, n_schedule=None, *,
                          eps_grid=EPS_GRID, eta: float = DEFAULT_ETAS[0]) -> PreservationReport:
    """phi with bounded values on its domain and bounded Clarke
    subgradients: I_phi(x_n) -> I_phi(x), each row checked against the
    estimate 2 M mu(T) + delta eps mu(S)."""
    if phi.value_bound is None:
        raise HypothesisViolation(f"{phi.name} carries no value bound M")
    if phi.clarke_bound is None:
        raise HypothesisViolation(f"{phi.name} carries no Clarke subgradient bound")
    return _preservation("II", phi, fam, n_schedule, eps_grid, eta)


@dataclass
class ProbeReport:
    integrand: str
    family: str
    rows: list
    composition_verdict: dict
    measure_verdict: dict
    status: str
    limit_min: float
    limit_max: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def measure_to_value_probe(phi: Integrand, fam: SequenceFamily, n_schedule=None, *,
                           etas: Sequence[float] = DEFAULT_ETAS) -> ProbeReport:
    """For -log: if the integral of |phi(x_n) - phi(x)| tends to 0 and x is
    bounded, x_n should converge to x in measure.

    Each row also records the lower bound eta mu(T_eta)/(L + eta) that the
    composition distance must exceed, L = sup |x|.  Status is
    ``consistent``, ``violation`` or ``not applicable`` (composition
    distance not seen to vanish).
    """
    if phi.name != "burg":
        raise HypothesisViolation("the probe is stated for the Burg integrand -log x")
    schedule = _check_schedule(n_schedule if n_schedule is not None else fam.default_schedule)
    x = fam.limit
    lo, hi = float(x.values.min()), float(x.values.max())
    if not lo > 0:
        raise HypothesisViolation("the limit must be positive (inside dom phi)")
    L = max(abs(lo), abs(hi))
    rows = []
    for n in schedule:
        xn = fam(n)
        comp = composition_distance(phi, xn, x)
        devs = {e: deviation_measure(xn, x, e) for e in etas}
        lower = max(e * d / (L + e) for e, d in devs.items())
        rows.append({"n": n, "composition": comp, "deviation": devs, "lower_bound": lower,
                     "bound_holds": comp >= lower * (1 - 1e-12)})
    cv = judge(schedule, [r["composition"] for r in rows], fam.rates.get(f"composition:{phi.name}"))
    mv = judge(schedule, [r["deviation"][min(etas)] for r in rows], fam.rates.get("deviation"))
    if cv["verdict"] != "holds":
        status = "not applicable"
    elif mv["verdict"] == "holds" and all(r["bound_holds"] for r in rows):
        status = "consistent"
    else:
        status = "violation"
    return ProbeReport(phi.name, fam.name, rows, cv, mv, status, lo, hi)

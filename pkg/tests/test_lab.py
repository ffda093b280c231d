import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rotund.exceptions import HypothesisViolation, UnknownNameError
from rotund.integrands import catalog_get
from rotund.lab import (FAMILY_NAMES, constant_family, default_dictionary, family, judge, measure_to_value_probe,
                        preservation_check_I, preservation_check_II, run, scaled_family)
from rotund.measure import MeasureSpace, SimpleFunction, deviation_measure, integral_functional

SCHEDULE = [10, 100, 1000, 10_000, 100_000, 1_000_000]


def test_family_catalogue():
    assert set(FAMILY_NAMES) == {"exlbr2", "exlbr3", "incompat", "burg_level_escape", "rademacher",
                                 "spike_preservation"}
    with pytest.raises(UnknownNameError):
        family("nope")


@pytest.mark.parametrize("n", SCHEDULE)
def test_exlbr2_golden_numbers(n):
    fam = family("exlbr2")
    burg = catalog_get("burg")
    assert integral_functional(burg, fam(n)) == pytest.approx(-math.log(n) / (1 + math.log(n)), abs=1e-12)
    assert integral_functional(burg, fam.limit) == pytest.approx(-1.0, abs=1e-15)
    assert deviation_measure(fam(n), fam.limit, 0.5) >= 0.5


@pytest.mark.parametrize("n", SCHEDULE)
def test_incompat_golden_numbers(n):
    fam = family("incompat")
    phi = catalog_get("burg_plus_linear")
    assert integral_functional(phi, fam(n)) == pytest.approx(-math.log(n) / n + 2 - 1 / n, abs=1e-12)
    assert integral_functional(phi, fam.limit) == 1.0
    assert deviation_measure(fam(n), fam.limit, 0.5) == pytest.approx(1 / n, abs=1e-15)
    assert fam(n).l1_norm() == pytest.approx(2 - 1 / n, abs=1e-14)


def test_exlbr3_has_limit_one():
    fam = family("exlbr3")
    assert np.all(fam.limit.values == 1.0)
    np.testing.assert_array_equal(fam(50).values, family("exlbr2")(50).values)


def test_exlbr2_verdicts():
    rep = run(family("exlbr2"), catalog_get("burg"))
    v = {k: d["verdict"] for k, d in rep.verdicts.items()}
    assert v["converges_in_measure"] == "fails"
    assert v["value_convergent:burg"] in ("holds", "inconclusive")
    for key, d in rep.verdicts.items():
        if d.get("declared") is not None:
            assert d["verdict"] in ({True: "holds", False: "fails"}[d["declared"]], "inconclusive"), key


def test_incompat_verdicts():
    rep = run(family("incompat"), catalog_get("burg_plus_linear"))
    v = {k: d["verdict"] for k, d in rep.verdicts.items()}
    assert v["converges_in_measure"] == "holds"
    assert v["value_convergent:burg_plus_linear"] == "fails"
    assert v["l1_convergent"] == "fails"
    gaps = rep.column("value_gap")
    assert abs(gaps[-1] - 1.0) <= 1e-3


def test_rademacher_is_weakly_but_not_measure_convergent():
    rep = run(family("rademacher"), catalog_get("boltzmann_shannon"), [2, 4, 6, 8, 10, 12])
    v = {k: d["verdict"] for k, d in rep.verdicts.items()}
    assert v["weakly_convergent_surrogate"] == "holds"
    assert v["converges_in_measure"] == "fails"


def test_judge_rules():
    ns = [10, 100, 1000]
    assert judge(ns, [0.5, 0.01, 1e-4])["verdict"] == "holds"
    assert judge(ns, [1.0, 1.0, 1.0])["verdict"] == "fails"
    assert judge(ns, [1.0, 0.3, 0.05])["verdict"] == "inconclusive"
    # slow but certified decay: within a factor 10 of a vanishing rate
    assert judge(ns, [0.5, 0.05, 0.005], rate=lambda n: 1 / n)["verdict"] == "holds"


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 5.0), min_size=3, max_size=8))
def test_judge_is_total_and_consistent(vals):
    ns = list(range(1, len(vals) + 1))
    out = judge(ns, vals)
    assert out["verdict"] in ("holds", "fails", "inconclusive")
    if out["verdict"] == "holds":
        assert vals[-1] < 1e-3
    if out["verdict"] == "fails":
        assert min(vals[-3:]) >= 0.1


def test_report_csv_columns():
    rep = run(family("incompat"), catalog_get("burg"), [10, 100, 1000])
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0][:8] == ["n", "value", "limit_value", "value_gap", "l1", "composition", "weak_gap", "l1_norm"]
    assert "deviation_0.5" in rows[0] and "ui_tail_10" in rows[0]
    assert len(rows) == 4


def test_preservation_on_clipped_norm():
    phi = catalog_get("clipped_norm")
    fam = family("spike_preservation")
    for check in (preservation_check_I, preservation_check_II):
        rep = check(phi, fam)
        assert rep.passed
        for row in rep.rows:
            assert row["within_bound"]
            assert row["bound"] >= (row["composition"] if rep.kind == "I" else row["value_gap"])


def test_preservation_refuses_burg():
    fam = family("spike_preservation")
    with pytest.raises(HypothesisViolation):
        preservation_check_I(catalog_get("burg"), fam)
    with pytest.raises(HypothesisViolation):
        preservation_check_II(catalog_get("burg"), fam)


def test_preservation_refuses_non_measure_convergent_family():
    with pytest.raises(HypothesisViolation):
        preservation_check_I(catalog_get("clipped_norm"), family("exlbr2"))


def test_measure_to_value_probe():
    burg = catalog_get("burg")
    assert measure_to_value_probe(burg, scaled_family()).status == "consistent"
    assert measure_to_value_probe(burg, family("exlbr2")).status == "not applicable"
    x = SimpleFunction.step([0.5], [1.0, 2.0])
    assert measure_to_value_probe(burg, constant_family(x)).status == "consistent"
    with pytest.raises(HypothesisViolation):
        measure_to_value_probe(catalog_get("boltzmann_shannon"), scaled_family())


def test_default_dictionary_size():
    assert len(default_dictionary()) == 11

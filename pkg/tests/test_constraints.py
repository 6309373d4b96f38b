import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from redistsim.constraints import (ConstraintSpec, SoftTerm, group_hinge_energy, partial_energy,
                                   splits_energy, total_energy)
from redistsim.errors import ConfigError, DomainError, ShapeError
from redistsim.synthetic import grid_map


@pytest.mark.parametrize("share, target, expected", [
    (0.55, 0.52, 0.0),
    (0.52, 0.52, 0.0),
    (0.40, 0.52, 0.0144),
])
def test_hinge(share, target, expected):
    assert group_hinge_energy(share, target, 2) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("share, target, exponent", [(1.2, 0.5, 2), (-0.1, 0.5, 2), (0.5, 1.5, 2), (0.5, 0.5, 0)])
def test_hinge_domain(share, target, exponent):
    with pytest.raises(DomainError):
        group_hinge_energy(share, target, exponent)


@pytest.mark.parametrize("units, plan, expected", [
    (list("AABB"), [1, 1, 2, 2], 0),
    (list("AABB"), [1, 2, 1, 2], 2),
    (list("AAA"), [1, 2, 3], 2),
])
def test_splits_energy(units, plan, expected):
    assert splits_energy(plan, units) == expected


def test_splits_energy_shape():
    with pytest.raises(ShapeError):
        splits_energy([1, 2], ["A"])


@pytest.mark.parametrize("kwargs", [
    {"pop_tol": 0.0}, {"pop_tol": 1.0}, {"rho": -1.0},
    {"soft_terms": [{"kind": "bogus"}]},
    {"soft_terms": [{"kind": "splits_penalty", "strength": -1}]},
])
def test_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        ConstraintSpec(**kwargs)


@pytest.fixture(scope="module")
def rmap():
    return grid_map(4, 4, 2, counties=(2, 2))


def halves():
    return np.repeat([1, 2], 8)


def columns():
    return np.tile([1, 1, 2, 2], 4)


def test_empty_terms_zero(rmap):
    assert total_energy(halves(), rmap, ConstraintSpec()) == 0


def test_inactive_hinge_zero(rmap):
    spec = ConstraintSpec(soft_terms=[SoftTerm("group_hinge", 5.0, {"group": "vap_black", "target": 0.0})])
    assert total_energy(halves(), rmap, spec) == 0


def test_additivity(rmap):
    hinge = SoftTerm("group_hinge", 2.0, {"group": "vap_black", "target": 0.5})
    split = SoftTerm("splits_penalty", 0.7, {"units": "county"})
    both = total_energy(columns(), rmap, ConstraintSpec(soft_terms=[hinge, split]))
    a = total_energy(columns(), rmap, ConstraintSpec(soft_terms=[hinge]))
    b = total_energy(columns(), rmap, ConstraintSpec(soft_terms=[split]))
    assert both == pytest.approx(a + b)
    assert a > 0


def test_hinge_top_k(rmap):
    plan = columns()
    share = (np.bincount(plan - 1, rmap.data["vap_black"]) / np.bincount(plan - 1, rmap.data["vap"]))
    term = SoftTerm("group_hinge", 1.0, {"group": "vap_black", "target": 0.6, "n_districts": 1})
    expected = (0.6 - share.max()) ** 2
    assert total_energy(plan, rmap, ConstraintSpec(soft_terms=[term])) == pytest.approx(expected)


def test_custom_term(rmap):
    term = SoftTerm("custom", 3.0, {"function": lambda plan, m: float(plan[0])})
    assert total_energy(halves(), rmap, ConstraintSpec(soft_terms=[term])) == 3.0
    assert partial_energy(np.zeros(16, dtype=int), rmap, ConstraintSpec(soft_terms=[term]), False) == 0


def plan_length(plan, rmap):
    return len(plan)


def test_custom_term_import_path(rmap):
    term = SoftTerm("custom", 1.0, {"function": "test_constraints:plan_length"})
    assert total_energy(halves(), rmap, ConstraintSpec(soft_terms=[term])) == 16
    bad = SoftTerm("custom", 1.0, {"function": "no_such_module:f"})
    with pytest.raises(ConfigError):
        total_energy(halves(), rmap, ConstraintSpec(soft_terms=[bad]))


def test_unknown_column(rmap):
    term = SoftTerm("group_hinge", 1.0, {"group": "missing"})
    with pytest.raises(ConfigError):
        total_energy(halves(), rmap, ConstraintSpec(soft_terms=[term]))


def test_partial_equals_total_when_complete(rmap):
    spec = ConstraintSpec(soft_terms=[SoftTerm("splits_penalty", 1.5, {"units": "county"}),
                                      SoftTerm("group_hinge", 1.0, {"group": "vap_black", "target": 0.5})])
    assert partial_energy(columns(), rmap, spec, True) == total_energy(columns(), rmap, spec)


TERMS = [SoftTerm("splits_penalty", 1.3, {"units": "county"}),
         SoftTerm("group_hinge", 2.0, {"group": "vap_black", "target": 0.45, "n_districts": 2})]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_relabel_and_scaling(seed):
    rmap = grid_map(4, 4, 3, counties=(2, 2))
    rng = np.random.default_rng(seed)
    plan = rng.integers(1, 4, size=16)
    spec = ConstraintSpec(soft_terms=TERMS)
    e = total_energy(plan, rmap, spec)
    perm = rng.permutation(3) + 1
    assert total_energy(perm[plan - 1], rmap, spec) == pytest.approx(e)
    assert total_energy(plan, rmap, spec.scaled(2.0)) == pytest.approx(2 * e)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0.5, 4))
def test_hinge_monotone(a, b, target, exponent):
    lo, hi = sorted([a, b])
    assert group_hinge_energy(lo, target, exponent) >= group_hinge_energy(hi, target, exponent)
    assert group_hinge_energy(target, target, exponent) == 0

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import assert_hard_constraints, map_from_edges
from oracles import equal_partitions, grid_edges, partition_key, tau_det, weighted_tv
from redistsim.constraints import ConstraintSpec, SoftTerm
from redistsim.errors import (DomainError, DuplicateName, NotConnected, NotContiguous,
                              SamplerCollapse, ShapeError)
from redistsim.graph import grid_graph
from redistsim.metrics import splits_count
from redistsim.sampler import (PlanEnsemble, SamplerParams, add_reference, brute_force_relabel,
                               log_orderings, match_numbers, overlap_matrix, resample, smc_sample,
                               split_stage, systematic_indices, thin)
from redistsim.synthetic import grid_map

TIGHT = ConstraintSpec(pop_tol=0.001)


def run(rmap, spec=TIGHT, **kw):
    params = dict(nsims=200, nchains=1, seed=1)
    params.update(kw)
    return smc_sample(rmap, spec, SamplerParams(**params))


# -- full sampler -------------------------------------------------------------

def test_cycle4_two_plans_equal_frequency(cycle4_map):
    e = run(cycle4_map, nsims=10_000)
    counts = Counter(partition_key(p) for p in e.plans)
    assert set(counts) == {frozenset({frozenset({0, 1}), frozenset({2, 3})}),
                           frozenset({frozenset({1, 2}), frozenset({0, 3})})}
    for c in counts.values():
        assert abs(c / 10_000 - 0.5) < 0.02


def test_disconnected_graph():
    with pytest.raises(NotConnected):
        map_from_edges(4, [(0, 1), (2, 3)], 2)


def test_infeasible_parity_collapses_at_stage_one():
    rmap = map_from_edges(3, [(0, 1), (1, 2)], 2, pop=1, pop_tol=0.01)
    with pytest.raises(SamplerCollapse) as info:
        run(rmap, ConstraintSpec(pop_tol=0.01))
    assert info.value.stage == 1


def test_chain_and_draw_layout(grid44):
    e = run(grid44, nsims=50, nchains=3)
    assert len(e) == 150
    assert e.chain.tolist() == [1] * 50 + [2] * 50 + [3] * 50
    assert e.draw == list(range(1, 151))
    assert not e.reference.any()
    assert set(e.meta["final_weights"]) == {"1", "2", "3"}


def test_unresampled_weights_positive(grid44):
    e = run(grid44, final_resample=False)
    assert (e.weights > 0).all()


def test_deterministic(grid10_counties):
    spec = ConstraintSpec(pop_tol=0.05, admin_split_units=("county",))
    a = run(grid10_counties, spec, nsims=100, nchains=2, seed=7)
    b = run(grid10_counties, spec, nsims=100, nchains=2, seed=7)
    assert a == b
    c = run(grid10_counties, spec, nsims=100, nchains=2, seed=8)
    assert not np.array_equal(a.plans, c.plans)


def test_worker_count_does_not_change_output(grid10_counties):
    spec = ConstraintSpec(pop_tol=0.05, admin_split_units=("county",))
    a = run(grid10_counties, spec, nsims=60, nchains=2, seed=3, workers=1)
    b = run(grid10_counties, spec, nsims=60, nchains=2, seed=3, workers=2)
    assert a == b
    assert a.meta == b.meta


@pytest.mark.parametrize("k, tol, counties", [(4, 0.05, None), (5, 0.02, (5, 5)), (3, 0.05, (2, 5))])
def test_hard_constraints(k, tol, counties):
    units = ("county",) if counties else ()
    rmap = grid_map(10, 10, k, pop_tol=tol, counties=counties, admin_units=units)
    spec = ConstraintSpec(pop_tol=tol, admin_split_units=units)
    e = run(rmap, spec, nsims=150, nchains=2)
    assert_hard_constraints(e, rmap, tol, units)


@pytest.mark.parametrize("bad", [dict(nsims=0), dict(nchains=0), dict(resample_rule=0.0),
                                 dict(resample_rule=1.5), dict(max_retry=0), dict(seed=-1)])
def test_params_validation(bad):
    with pytest.raises(DomainError):
        SamplerParams(**bad)


# -- exactness against enumeration -------------------------------------------

@pytest.mark.slow
def test_exact_3x4_three_districts():
    rows, cols, k = 3, 4, 3
    target = equal_partitions(rows * cols, grid_edges(rows, cols), k)
    e = run(grid_map(rows, cols, k, pop_tol=0.001), nsims=20_000, final_resample=False)
    assert weighted_tv(e.plans, e.weights, target) < 0.05


@pytest.mark.slow
def test_exact_rho_half():
    rows, cols, k, rho = 3, 4, 2, 0.5
    edges = grid_edges(rows, cols)
    target = equal_partitions(rows * cols, edges, k,
                              weight=lambda parts: math.prod(tau_det(p, edges) ** rho for p in parts))
    spec = ConstraintSpec(pop_tol=0.001, rho=rho)
    e = run(grid_map(rows, cols, k, pop_tol=0.001), spec, nsims=20_000, final_resample=False)
    assert weighted_tv(e.plans, e.weights, target) < 0.05


@pytest.mark.slow
def test_exact_soft_splits_penalty():
    rows, cols, k, beta = 4, 4, 2, 0.8
    rmap = grid_map(rows, cols, k, pop_tol=0.001, counties=(2, 2))
    county = rmap.data["county"].to_numpy()
    edges = grid_edges(rows, cols)

    def weight(parts):
        plan = np.zeros(rows * cols, dtype=int)
        for d, p in enumerate(parts, 1):
            plan[list(p)] = d
        tau = math.prod(tau_det(p, edges) for p in parts)
        return tau * math.exp(-beta * splits_count(plan, county))

    target = equal_partitions(rows * cols, edges, k, weight=weight)
    spec = ConstraintSpec(pop_tol=0.001, soft_terms=[SoftTerm("splits_penalty", beta, {"units": "county"})])
    e = run(rmap, spec, nsims=20_000, final_resample=False)
    assert weighted_tv(e.plans, e.weights, target) < 0.05


@pytest.mark.slow
def test_exact_split_cap():
    rows, cols, k = 3, 4, 3
    rmap = grid_map(rows, cols, k, pop_tol=0.001, counties=(3, 2), admin_units=("county",))
    county = rmap.data["county"].to_numpy()
    edges = grid_edges(rows, cols)

    def weight(parts):
        plan = np.zeros(rows * cols, dtype=int)
        for d, p in enumerate(parts, 1):
            plan[list(p)] = d
        if splits_count(plan, county) > k - 1:
            return 0
        return math.prod(tau_det(p, edges) for p in parts)

    target = equal_partitions(rows * cols, edges, k, weight=weight)
    spec = ConstraintSpec(pop_tol=0.001, admin_split_units=("county",))
    e = run(rmap, spec, nsims=20_000, final_resample=False)
    assert_hard_constraints(e, rmap, 0.001, ("county",))
    assert weighted_tv(e.plans, e.weights, target) < 0.05


def test_ordering_count_small():
    # path of three districts 1-2-3: valid orders peel an end each time -> 4 orderings
    g = grid_graph(1, 3)
    assert math.exp(log_orderings(np.array([1, 2, 3]), g, 3)) == pytest.approx(4)
    # triangle-adjacent districts: all 6 orders
    g = grid_graph(2, 2)
    assert math.exp(log_orderings(np.array([1, 1, 2, 3]), g, 3)) == pytest.approx(6)


# -- split_stage --------------------------------------------------------------

def test_split_stage_cycle4_equal_weights(cycle4_map):
    rng = np.random.default_rng(0)
    seen, weights = set(), set()
    for _ in range(200):
        res = split_stage(np.arange(4), 2, cycle4_map, TIGHT, rng)
        seen.add(frozenset(res.district.tolist()))
        weights.add(round(res.log_weight, 12))
    assert seen == {frozenset(s) for s in ({0, 1}, {1, 2}, {2, 3}, {0, 3})}
    assert len(weights) == 1


def test_split_stage_path4_middle_edge(path4_map):
    rng = np.random.default_rng(0)
    for _ in range(50):
        res = split_stage(np.arange(4), 2, path4_map, TIGHT, rng)
        assert frozenset(res.district.tolist()) in {frozenset({0, 1}), frozenset({2, 3})}
        # the middle edge of every pooled tree is valid from either side
        assert res.n_valid == 64


def test_split_stage_dead():
    rmap = map_from_edges(3, [(0, 1), (1, 2)], 2, pop=1, pop_tol=0.01)
    assert split_stage(np.arange(3), 2, rmap, ConstraintSpec(pop_tol=0.01), np.random.default_rng(0)) is None


def test_split_stage_respects_bounds(grid10_counties):
    rng = np.random.default_rng(5)
    spec = ConstraintSpec(pop_tol=0.05)
    parity = grid10_counties.parity
    for _ in range(20):
        res = split_stage(np.arange(100), 4, grid10_counties, spec, rng)
        pop = grid10_counties.pop
        assert abs(pop[res.district].sum() - parity) <= 0.05 * parity
        assert abs(pop[res.remainder].sum() - 3 * parity) <= 3 * 0.05 * parity


# -- resampling ---------------------------------------------------------------

def test_resample_uniform_identity():
    out = resample(np.arange(6), np.ones(6), np.random.default_rng(0))
    assert sorted(out.tolist()) == list(range(6))


def test_resample_single_weight():
    assert resample(np.arange(4), [1, 0, 0, 0], np.random.default_rng(0)).tolist() == [0, 0, 0, 0]


@pytest.mark.parametrize("seed", range(20))
def test_resample_three_one(seed):
    idx = systematic_indices([3, 1], np.random.default_rng(seed), 4)
    assert Counter(idx.tolist()) == {0: 3, 1: 1}


def test_resample_all_zero():
    with pytest.raises(SamplerCollapse):
        resample([1, 2], [0, 0], np.random.default_rng(0))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=30).filter(lambda w: sum(w) > 0),
       st.integers(0, 2 ** 32 - 1))
def test_systematic_counts_within_one(w, seed):
    idx = systematic_indices(w, np.random.default_rng(seed))
    counts = np.bincount(idx, minlength=len(w))
    expected = len(w) * np.asarray(w) / sum(w)
    assert len(idx) == len(w)
    assert np.all(np.abs(counts - expected) < 1 + 1e-9)


# -- thinning, references, renumbering -------------------------------------------------

def toy_ensemble(n=20, k=2, nodes=4):
    rng = np.random.default_rng(0)
    plans = np.array([rng.permutation(np.arange(nodes) % k) + 1 for _ in range(n)])
    return PlanEnsemble(plans, np.ones(n), np.repeat([1, 2], n // 2), list(range(1, n + 1)),
                        np.zeros(n, dtype=bool), k)


def test_thin_counts_and_chains():
    e = add_reference(toy_ensemble(), np.array([1, 1, 2, 2]), "enacted")
    t = thin(e, 6, np.random.default_rng(0))
    assert t.n_sims == 6 and t.reference_names == ["enacted"]
    src = {d: c for d, c in zip(e.draw, e.chain)}
    assert all(src[d] == c for d, c in zip(t.draw, t.chain))


def test_thin_identity_and_zero():
    e = toy_ensemble()
    assert thin(e, e.n_sims, np.random.default_rng(0)) == e
    e = add_reference(e, np.array([1, 1, 2, 2]), "ref")
    z = thin(e, 0, np.random.default_rng(0))
    assert z.n_sims == 0 and z.reference_names == ["ref"]
    with pytest.raises(DomainError):
        thin(e, 21, np.random.default_rng(0))


def test_add_reference_errors():
    e = add_reference(toy_ensemble(), np.array([1, 1, 2, 2]), "cd_2010")
    assert len(e) == 21 and e.draw[0] == "cd_2010" and e.weights[0] == 0
    with pytest.raises(DuplicateName):
        add_reference(e, np.array([1, 1, 2, 2]), "cd_2010")
    with pytest.raises(NameError):
        add_reference(e, np.array([1, 1, 2, 2]), "cd_2010")
    g = grid_graph(1, 4)
    with pytest.raises(NotContiguous):
        add_reference(e, np.array([1, 2, 1, 2]), "bad", g)


def plans_with_overlap(matrix):
    plan, ref = [], []
    for i, row in enumerate(matrix):
        for j, c in enumerate(row):
            plan += [i + 1] * c
            ref += [j + 1] * c
    return np.array(plan), np.array(ref)


def test_match_numbers_identity_and_swap():
    ref = np.array([1, 1, 2, 2, 3, 3])
    e = PlanEnsemble(np.array([ref, [2, 2, 1, 1, 3, 3]]), [1, 1], [1, 1], [1, 2], [False, False], 3)
    out = match_numbers(e, ref, np.ones(6))
    assert (out.plans == ref).all()


def test_match_numbers_overlap_example():
    plan, ref = plans_with_overlap([[5, 0, 1], [0, 6, 0], [2, 0, 4]])
    pop = np.ones(len(plan))
    assert (overlap_matrix(plan, ref, pop, 3) == [[5, 0, 1], [0, 6, 0], [2, 0, 4]]).all()
    best, perm = brute_force_relabel(plan, ref, pop, 3)
    assert best == 15 and perm == (0, 1, 2)
    e = PlanEnsemble(plan[None], [1], [1], [1], [False], 3)
    assert (match_numbers(e, ref, pop).plans[0] == plan).all()


def test_match_numbers_shape_error():
    e = toy_ensemble()
    with pytest.raises(ShapeError):
        match_numbers(e, np.array([1, 2]), np.ones(4))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2 ** 32 - 1))
def test_match_numbers_preserves_partitions(k, seed):
    rng = np.random.default_rng(seed)
    n = 12
    plans = np.array([rng.permutation(np.arange(n) % k) + 1 for _ in range(5)])
    ref = rng.permutation(np.arange(n) % k) + 1
    pop = rng.integers(1, 50, n).astype(float)
    e = PlanEnsemble(plans, np.ones(5), np.ones(5), list(range(1, 6)), np.zeros(5, bool), k)
    out = match_numbers(e, ref, pop)
    for a, b in zip(plans, out.plans):
        assert partition_key(a) == partition_key(b)
        assert sorted(np.bincount(a - 1, pop)) == sorted(np.bincount(b - 1, pop))
        best, _ = brute_force_relabel(a, ref, pop, k)
        assert overlap_matrix(b, ref, pop, k).trace() == pytest.approx(best)

"""Sequential Monte Carlo sampling of district plans.

Each particle grows a plan one district at a time. At every stage the
unassigned region is split by cutting a random spanning tree; the
importance weights correct the proposal to the target

    pi(plan)  ~  prod_d tau(d) ** rho * exp(-energy(plan))

restricted to plans that are contiguous, within ``pop_tol`` of parity and
under the admin-split cap.

Proposal at a stage: draw ``max_retry`` uniform spanning trees of the region
and pick one valid (tree, edge, side) uniformly from the pooled set of valid
cuts. With V valid cuts in a pool of M trees, the pair (district, V/M) is
properly weighted for tau(D) tau(R - D) c(D) / tau(R), where c counts graph
edges between the two sides. The tau(R) factors telescope across stages so
the stage log-weight is

    (rho - 1) log tau(D) + log(V / M) - log c(D) - energy increment

and at the end each plan is divided by the number of district orderings the
sampler could have produced it in (orderings whose remainders stay
connected).
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .constraints import ConstraintSpec, partial_energy
from .errors import DomainError, DuplicateName, NotConnected, NotContiguous, SamplerCollapse, ShapeError
from .graph import is_contiguous, log_spanning_trees_local

log = logging.getLogger(__name__)

MAX_ORDERING_DISTRICTS = 22


@dataclass(frozen=True)
class SamplerParams:
    nsims: int = 1000
    nchains: int = 2
    seed: int = 0
    resample_rule: float = 0.5
    max_retry: int = 32
    workers: int = 1
    final_resample: bool = True

    def __post_init__(self):
        if self.nsims < 1:
            raise DomainError("nsims must be >= 1")
        if self.nchains < 1:
            raise DomainError("nchains must be >= 1")
        if not 0 < self.resample_rule <= 1:
            raise DomainError("resample_rule must lie in (0, 1]")
        if self.max_retry < 1:
            raise DomainError("max_retry must be >= 1")
        if self.seed < 0:
            raise DomainError("seed must be a non-negative integer")


@dataclass(eq=False)
class PlanEnsemble:
    """Plans (rows) by precinct (columns) with per-plan bookkeeping.

    Reference plans have ``chain == 0`` and a string ``draw``; simulated
    plans carry integer draws numbered from 1.
    """

    plans: np.ndarray
    weights: np.ndarray
    chain: np.ndarray
    draw: list
    reference: np.ndarray
    ndists: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.plans = np.asarray(self.plans, dtype=np.int32).reshape(len(self.draw), -1)
        self.weights = np.asarray(self.weights, dtype=float)
        self.chain = np.asarray(self.chain, dtype=np.int64)
        self.reference = np.asarray(self.reference, dtype=bool)
        if not (len(self.weights) == len(self.chain) == len(self.reference) == len(self.plans)):
            raise ShapeError("ensemble fields have inconsistent lengths")

    def __len__(self):
        return len(self.draw)

    @property
    def n_sims(self):
        return int((~self.reference).sum())

    @property
    def reference_names(self):
        return [d for d, r in zip(self.draw, self.reference) if r]

    def sims(self):
        """Copy restricted to simulated (non-reference) plans."""
        return self.subset(np.flatnonzero(~self.reference))

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return PlanEnsemble(self.plans[idx], self.weights[idx], self.chain[idx],
                            [self.draw[i] for i in idx], self.reference[idx],
                            self.ndists, dict(self.meta))

    def plan(self, draw):
        return self.plans[self.draw.index(draw)]

    def __eq__(self, other):
        return (isinstance(other, PlanEnsemble) and self.ndists == other.ndists
                and self.draw == other.draw and np.array_equal(self.plans, other.plans)
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.chain, other.chain)
                and np.array_equal(self.reference, other.reference))


# -- resampling ---------------------------------------------------------------

def systematic_indices(weights, rng, n=None):
    """Systematic resampling: indices of survivors, in increasing order."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise SamplerCollapse("cannot resample: no positive weight")
    n = len(w) if n is None else n
    cum = np.cumsum(w / w.sum())
    cum[-1] = 1.0
    pos = (np.arange(n) + rng.random()) / n
    return np.searchsorted(cum, pos, side="right")


def resample(particles, weights, rng):
    """Systematic resampling of ``particles`` (array or list)."""
    idx = systematic_indices(weights, rng)
    if isinstance(particles, np.ndarray):
        return particles[idx]
    return [particles[i] for i in idx]


def _ess(w):
    s = w.sum()
    return 0.0 if s == 0 else s * s / np.sum(w * w)


# -- per-stage split ----------------------------------------------------------

class _Context:
    """Everything a worker needs to advance particles. Picklable."""

    def __init__(self, rmap, spec, params):
        g = rmap.graph
        self.indptr = g.indptr
        self.indices = g.indices
        self.n = g.n
        self.pop = rmap.pop
        self.parity = rmap.parity
        self.tol = spec.pop_tol
        self.ndists = rmap.ndists
        self.rho = spec.rho
        self.n_trees = params.max_retry
        self.seed = params.seed
        layers = [rmap.units(name) for name in spec.admin_split_units]
        self.codes = (np.vstack([u.codes for u in layers]) if layers
                      else np.zeros((0, g.n), dtype=np.int64))
        self.n_units = np.array([u.n_units for u in layers], dtype=np.int64)
        self.max_units = int(self.n_units.max()) if layers else 0
        self.spec = spec
        self.rmap = rmap if any(t.strength != 0 for t in spec.soft_terms) else None


@dataclass
class SplitResult:
    district: np.ndarray
    remainder: np.ndarray
    log_weight: float
    n_valid: int


def _split(ctx, assignment, remaining, rng):
    region = assignment == 0
    local = np.full(ctx.n, -1, dtype=np.int64)
    nodes = np.flatnonzero(region)
    local[nodes] = np.arange(len(nodes))
    nodes, ptr, idx = _kernels.induced_csr(ctx.indptr, ctx.indices, local)
    if len(nodes) < 2:
        return None

    n_layers = ctx.codes.shape[0]
    width = max(ctx.max_units, 1)
    lcodes = np.ascontiguousarray(ctx.codes[:, nodes])
    region_cnt = np.zeros((n_layers, width), dtype=np.int64)
    region_units = np.full((n_layers, width), -1, dtype=np.int64)
    base = np.zeros(n_layers, dtype=np.int64)
    assigned = ~region
    for t in range(n_layers):
        region_cnt[t] = np.bincount(lcodes[t], minlength=width)
        present = np.flatnonzero(region_cnt[t])
        region_units[t, :len(present)] = present
        pairs = np.unique(ctx.codes[t, assigned] * (ctx.ndists + 2) + assignment[assigned])
        base[t] = len(pairs) - ctx.n_units[t]
    cap = np.full(n_layers, ctx.ndists - 1, dtype=np.int64)

    out = np.zeros(len(nodes), dtype=np.bool_)
    n_valid = _kernels.pooled_split(ptr, idx, ctx.pop[nodes], ctx.parity, ctx.tol, remaining,
                                    lcodes, region_cnt, region_units, base, cap,
                                    ctx.n_trees, rng, out)
    if n_valid == 0:
        return None
    cut = _kernels.cut_edges(ptr, idx, out)
    logw = math.log(n_valid / ctx.n_trees) - math.log(cut)
    if ctx.rho != 1:
        logw += (ctx.rho - 1) * _log_tau(nodes, ptr, idx, out)
        if remaining == 2:
            logw += (ctx.rho - 1) * _log_tau(nodes, ptr, idx, ~out)
    return SplitResult(nodes[out], nodes[~out], logw, n_valid)


def _log_tau(nodes, ptr, idx, mask):
    local = np.full(len(nodes), -1, dtype=np.int64)
    local[mask] = np.arange(int(mask.sum()))
    _, p, i = _kernels.induced_csr(ptr, idx, local)
    return log_spanning_trees_local(p, i)


def split_stage(region, remaining_districts, rmap, spec, rng, max_retry=32, assigned=None):
    """Split one district off a connected region.

    ``assigned`` is the partial plan outside the region (0 inside), used
    for the running admin-split count. Returns a :class:`SplitResult` or
    ``None`` when no tree in the pool has a valid cut.
    """
    if remaining_districts < 2:
        raise DomainError("remaining_districts must be >= 2")
    region = np.asarray(region)
    if region.dtype != bool:
        mask = np.zeros(rmap.graph.n, dtype=bool)
        mask[region] = True
        region = mask
    assignment = np.zeros(rmap.graph.n, dtype=np.int64) if assigned is None \
        else np.asarray(assigned, dtype=np.int64).copy()
    assignment[~region & (assignment == 0)] = rmap.ndists + 1
    assignment[region] = 0
    ctx = _Context(rmap, spec, SamplerParams(max_retry=max_retry, nchains=1))
    return _split(ctx, assignment, remaining_districts, rng)


def _particle_rng(seed, chain, stage, i):
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(seed, spawn_key=(chain, stage, 0, i))))


def _stage_rng(seed, chain, stage):
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(seed, spawn_key=(chain, stage, 1))))


def _advance(ctx, chain, stage, items):
    """Advance a batch of particles by one stage.

    ``items`` is a list of (particle index, assignment, previous energy).
    Returns (index, new assignment or None, log weight increment, energy).
    """
    remaining = ctx.ndists - stage + 1
    final = remaining == 2
    out = []
    for i, row, e_prev in items:
        rng = _particle_rng(ctx.seed, chain, stage, i)
        res = _split(ctx, row, remaining, rng)
        if res is None:
            out.append((i, None, -np.inf, e_prev))
            continue
        new = row.copy()
        new[res.district] = stage
        if final:
            new[res.remainder] = ctx.ndists
        logw = res.log_weight
        e_new = e_prev
        if ctx.rmap is not None:
            e_new = partial_energy(new, ctx.rmap, ctx.spec, complete=final)
            logw -= e_new - e_prev
        out.append((i, new, logw, e_new))
    return out


_WORKER_CTX = None


def _init_worker(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _advance_in_worker(chain, stage, items):
    return _advance(_WORKER_CTX, chain, stage, items)


def log_orderings(plan, graph, ndists):
    """log of the number of district orderings with connected remainders."""
    if ndists == 1:
        return 0.0
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    a, b = plan[u] - 1, plan[v] - 1
    cross = a != b
    bits = np.zeros(ndists, dtype=np.int64)
    np.bitwise_or.at(bits, a[cross], np.left_shift(1, b[cross]).astype(np.int64))
    np.bitwise_or.at(bits, b[cross], np.left_shift(1, a[cross]).astype(np.int64))
    return math.log(_kernels.ordering_count(bits, ndists))


def _run_chain(ctx, rmap, params, chain, pool):
    n_part = params.nsims
    k = rmap.ndists
    assign = np.zeros((n_part, rmap.graph.n), dtype=np.int64)
    logw = np.zeros(n_part)
    energy = np.zeros(n_part)
    acceptance, resampled, ess_trace = [], [], []

    if k == 1:
        assign[:] = 1
        if ctx.rmap is not None:
            energy[:] = partial_energy(assign[0], rmap, ctx.spec, complete=True)
            logw -= energy

    for stage in range(1, k):
        if stage > 1:
            w = np.exp(logw - logw.max())
            ess = _ess(w)
            ess_trace.append(ess / n_part)
            if ess < params.resample_rule * n_part:
                idx = systematic_indices(w, _stage_rng(params.seed, chain, stage))
                assign, energy = assign[idx], energy[idx]
                logw = np.zeros(n_part)
                resampled.append(stage)
        items = [(i, assign[i], energy[i]) for i in np.flatnonzero(np.isfinite(logw))]
        if pool is None:
            results = _advance(ctx, chain, stage, items)
        else:
            size = max(1, math.ceil(n_part / (4 * params.workers)))
            batches = [items[j:j + size] for j in range(0, len(items), size)]
            results = [r for batch in pool.map(_advance_in_worker, [chain] * len(batches),
                                               [stage] * len(batches), batches) for r in batch]
        alive = 0
        for i, new, inc, e in results:
            if new is None:
                logw[i] = -np.inf
            else:
                assign[i] = new
                logw[i] += inc
                energy[i] = e
                alive += 1
        acceptance.append(alive / n_part)
        if alive == 0:
            raise SamplerCollapse(f"chain {chain}: every particle died at stage {stage}", stage)
        log.debug("chain %d stage %d: %.3f alive", chain, stage, alive / n_part)

    live = np.isfinite(logw)
    correct = k <= MAX_ORDERING_DISTRICTS
    if not correct:
        log.warning("skipping ordering correction for %d districts", k)
    if correct and k > 2:
        for i in np.flatnonzero(live):
            logw[i] -= log_orderings(assign[i], rmap.graph, k)
    w = np.where(live, np.exp(logw - logw[live].max()), 0.0)
    w /= w.sum()
    info = {"stage_acceptance": acceptance, "resampled_stages": resampled,
            "ess_trace": ess_trace, "final_weights": w.tolist(),
            "final_ess": _ess(w) / n_part}
    if params.final_resample:
        idx = systematic_indices(w, _stage_rng(params.seed, chain, k))
        return assign[idx], np.ones(n_part), info
    keep = np.flatnonzero(w > 0)
    return assign[keep], w[keep] * len(keep), info


def smc_sample(rmap, spec=None, params=None):
    """Draw ``params.nchains`` independent SMC runs of ``params.nsims`` plans."""
    spec = spec or ConstraintSpec(pop_tol=rmap.pop_tol)
    params = params or SamplerParams()
    if rmap.graph.n > 1 and not rmap.graph.is_connected():
        raise NotConnected("precinct graph is not connected")
    if rmap.graph.n < rmap.ndists:
        raise SamplerCollapse("fewer precincts than districts", 1)
    ctx = _Context(rmap, spec, params)

    pool = None
    if params.workers > 1:
        pool = ProcessPoolExecutor(params.workers, initializer=_init_worker, initargs=(ctx,))
    try:
        plans, weights, chains, infos = [], [], [], {}
        for c in range(1, params.nchains + 1):
            p, w, info = _run_chain(ctx, rmap, params, c, pool)
            plans.append(p)
            weights.append(w)
            chains.append(np.full(len(p), c))
            infos[c] = info
    finally:
        if pool is not None:
            pool.shutdown()

    plans = np.vstack(plans)
    meta = {
        "seed": params.seed, "nsims": params.nsims, "nchains": params.nchains,
        "pop_tol": spec.pop_tol, "rho": spec.rho, "max_retry": params.max_retry,
        "resample_rule": params.resample_rule,
        "stage_acceptance": {str(c): i["stage_acceptance"] for c, i in infos.items()},
        "final_weights": {str(c): i["final_weights"] for c, i in infos.items()},
        "final_ess": {str(c): i["final_ess"] for c, i in infos.items()},
        "resampled_stages": {str(c): i["resampled_stages"] for c, i in infos.items()},
    }
    return PlanEnsemble(plans, np.concatenate(weights), np.concatenate(chains),
                        list(range(1, len(plans) + 1)), np.zeros(len(plans), dtype=bool),
                        rmap.ndists, meta)


# -- post-processing ----------------------------------------------------------

def thin(e, m, rng):
    """Keep a uniform subsample of ``m`` simulated plans (order preserved)."""
    sims = np.flatnonzero(~e.reference)
    if not 0 <= m <= len(sims):
        raise DomainError(f"cannot thin {len(sims)} plans to {m}")
    keep = np.sort(rng.choice(sims, size=m, replace=False)) if m < len(sims) else sims
    idx = np.concatenate([np.flatnonzero(e.reference), keep])
    idx.sort()
    return e.subset(idx)


def overlap_matrix(plan, reference, pop, ndists):
    """(plan district, reference district) population overlap."""
    cells = (np.asarray(plan) - 1) * ndists + (np.asarray(reference) - 1)
    return np.bincount(cells, weights=pop, minlength=ndists * ndists).reshape(ndists, ndists)


def best_relabel(plan, reference, pop, ndists):
    """Label map (index = old label) maximizing overlap with ``reference``."""
    ov = overlap_matrix(plan, reference, pop, ndists)
    rows, cols = linear_sum_assignment(ov, maximize=True)
    new = np.zeros(ndists + 1, dtype=np.int64)
    new[rows + 1] = cols + 1
    return new


def match_numbers(e, reference, pop):
    """Relabel simulated plans to best match ``reference`` by population."""
    reference = np.asarray(reference)
    if reference.shape != (e.plans.shape[1],):
        raise ShapeError("reference plan does not match the ensemble")
    if reference.min() < 1 or reference.max() > e.ndists:
        raise ShapeError(f"reference labels must lie in 1..{e.ndists}")
    plans = e.plans.copy()
    for i in np.flatnonzero(~e.reference):
        plans[i] = best_relabel(plans[i], reference, pop, e.ndists)[plans[i]]
    return replace(e, plans=plans, meta=dict(e.meta))


def brute_force_relabel(plan, reference, pop, ndists):
    """Best label permutation by exhaustive search (small ndists only)."""
    ov = overlap_matrix(plan, reference, pop, ndists)
    best, best_perm = -np.inf, None
    for perm in permutations(range(ndists)):
        s = ov[np.arange(ndists), perm].sum()
        if s > best:
            best, best_perm = s, perm
    return best, best_perm


def add_reference(e, plan, name, graph=None):
    """Append a named reference plan (contiguity checked, parity not)."""
    name = str(name)
    if name in [str(d) for d in e.draw]:
        raise DuplicateName(f"draw '{name}' already exists")
    plan = np.asarray(plan, dtype=np.int32)
    if plan.shape != (e.plans.shape[1],):
        raise ShapeError("reference plan does not match the ensemble")
    if graph is not None and not is_contiguous(graph, plan):
        raise NotContiguous(f"reference plan '{name}' is not contiguous")
    n_ref = int(e.reference.sum())
    ins = n_ref
    return PlanEnsemble(np.insert(e.plans, ins, plan, axis=0), np.insert(e.weights, ins, 0.0),
                        np.insert(e.chain, ins, 0), e.draw[:ins] + [name] + e.draw[ins:],
                        np.insert(e.reference, ins, True), e.ndists, dict(e.meta))

"""Sample-quality diagnostics: weights, diversity, convergence, bottlenecks."""
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from .errors import DomainError, ShapeError
from .graph import is_contiguous
from .metrics import plan_level, splits_count

RHAT_MAX = 1.05
RHAT_COLUMNS = ("comp_edge", "comp_polsby", "plan_dev", "e_dem", "pbias", "egap")


def ess(weights):
    """Effective sample size (sum w)^2 / sum w^2."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise DomainError("weights must be non-negative")
    s = w.sum()
    if s == 0:
        raise DomainError("all weights are zero")
    w = w / s
    return float(1.0 / np.sum(w * w))


def _entropy(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def vi_distance(p, q, pops):
    """Variation of information between two plans, population weighted (nats)."""
    p, q = np.asarray(p), np.asarray(q)
    pops = np.asarray(pops, dtype=float)
    if p.shape != q.shape or p.shape != pops.shape:
        raise ShapeError("plans and populations must have equal length")
    total = pops.sum()
    if total <= 0:
        raise DomainError("total population must be positive")
    _, pi = np.unique(p, return_inverse=True)
    _, qi = np.unique(q, return_inverse=True)
    nq = qi.max() + 1
    joint = np.bincount(pi * nq + qi, weights=pops) / total
    rows = np.bincount(pi, weights=pops) / total
    cols = np.bincount(qi, weights=pops) / total
    return max(0.0, 2 * _entropy(joint) - _entropy(rows) - _entropy(cols))


def mean_pairwise_vi(plans, pops, pairs=1000, rng=None):
    """Mean VI over ``pairs`` random distinct plan pairs (all pairs if fewer exist)."""
    plans = np.asarray(plans)
    n = len(plans)
    if n < 2:
        raise DomainError("need at least two plans")
    n_all = n * (n - 1) // 2
    if n_all <= pairs:
        i, j = np.triu_indices(n, 1)
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        i = rng.integers(0, n, size=pairs)
        j = (i + rng.integers(1, n, size=pairs)) % n
    return float(np.mean([vi_distance(plans[a], plans[b], pops) for a, b in zip(i, j)]))


def rhat(chains):
    """Rank-normalized split R-hat.

    ``chains`` is a sequence of 1-d arrays (one per independent run); longer
    chains are truncated to the shortest. Returns 1.0 when all values are
    equal or when every chain is an exact copy of the first (no
    between-run variation at all).
    """
    chains = [np.asarray(c, dtype=float).ravel() for c in chains]
    if len(chains) < 2:
        raise DomainError("R-hat needs at least two chains")
    n = min(len(c) for c in chains)
    if n < 4:
        raise DomainError("R-hat needs at least four values per chain")
    x = np.vstack([c[:n] for c in chains])
    if np.all(x == x[0]):
        return 1.0
    half = n // 2
    x = np.vstack([x[:, :half], x[:, n - half:]])
    z = ndtri((rankdata(x, method="average").reshape(x.shape) - 3 / 8) / (x.size + 1 / 4))
    m, n = z.shape
    w = z.var(axis=1, ddof=1).mean()
    b = n * z.mean(axis=1).var(ddof=1)
    if w == 0:
        return float("inf") if b > 0 else 1.0
    var_plus = (n - 1) / n * w + b / n
    return float(np.sqrt(var_plus / w))


def bottleneck_check(stage_acceptance, threshold=0.01):
    """Stages (1-based) whose live-particle fraction fell below ``threshold``."""
    return [(s + 1, float(a)) for s, a in enumerate(stage_acceptance) if a < threshold]


@dataclass
class Flag:
    check: str
    passed: bool
    value: float = None
    threshold: float = None
    advisory: bool = True
    detail: str = ""


@dataclass
class DiagnosticsReport:
    ess_fraction: float
    mean_pairwise_vi: float
    rhat: dict
    stage_acceptance: list
    flags: list = field(default_factory=list)
    ess_by_chain: dict = field(default_factory=dict)
    opportunity: dict = None

    @property
    def passed(self):
        """True iff no non-advisory check failed."""
        return all(f.passed for f in self.flags if not f.advisory)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["flags"] = [Flag(**f) for f in d.get("flags", [])]
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def summary(self):
        lines = ["SMC diagnostics",
                 f"  ESS fraction (worst chain): {self.ess_fraction:.3f}",
                 f"  mean pairwise VI:           {self.mean_pairwise_vi:.4f}"]
        if self.rhat:
            lines.append("  R-hat:")
            lines += [f"    {k:<12} {v:.4f}" for k, v in sorted(self.rhat.items())]
        if self.stage_acceptance:
            acc = ", ".join(f"{a:.3f}" for a in self.stage_acceptance)
            lines.append(f"  live fraction by stage (worst chain): {acc}")
        if self.opportunity:
            lines.append(f"  opportunity districts: {self.opportunity}")
        lines.append("Checks:")
        for f in self.flags:
            tag = "PASS" if f.passed else ("WARN" if f.advisory else "FAIL")
            val = "" if f.value is None else f" value={f.value:.4g}"
            thr = "" if f.threshold is None else f" threshold={f.threshold:g}"
            extra = f" ({f.detail})" if f.detail else ""
            lines.append(f"  [{tag}] {f.check}{val}{thr}{extra}")
        return "\n".join(lines)


@dataclass(frozen=True)
class DiagnosticsConfig:
    rhat_max: float = RHAT_MAX
    ess_min: float = 0.05
    vi_min: float = 0.05
    acceptance_min: float = 0.01
    vi_pairs: int = 1000
    seed: int = 0
    strict: bool = False


def verify_plans(ensemble, rmap, pop_tol, split_units=()):
    """Re-check hard constraints on every simulated plan; returns failing draws."""
    bad = []
    pop = rmap.pop
    for i in np.flatnonzero(~ensemble.reference):
        plan = ensemble.plans[i]
        why = []
        if plan.min() < 1 or plan.max() > ensemble.ndists or len(np.unique(plan)) != ensemble.ndists:
            why.append("labels")
        elif not is_contiguous(rmap.graph, plan):
            why.append("contiguity")
        else:
            d = np.bincount(plan - 1, weights=pop, minlength=ensemble.ndists)
            parity = d.sum() / ensemble.ndists
            if np.any(np.abs(d - parity) > pop_tol * parity):
                why.append("population")
            for name in split_units:
                if splits_count(plan, rmap.units(name).codes) > ensemble.ndists - 1:
                    why.append(f"{name} splits")
        if why:
            bad.append((ensemble.draw[i], why))
    return bad


def build_report(ensemble, stats, rmap, config=None, opportunity=None):
    """Assemble the diagnostics report for a (possibly renumbered) ensemble."""
    config = config or DiagnosticsConfig()
    meta = ensemble.meta
    flags = []

    ess_by_chain = {}
    for c, w in meta.get("final_weights", {}).items():
        w = np.asarray(w)
        ess_by_chain[str(c)] = ess(w) / len(w)
    ess_frac = min(ess_by_chain.values()) if ess_by_chain else 1.0
    flags.append(Flag("ess_fraction", ess_frac >= config.ess_min, ess_frac, config.ess_min))

    sims = ensemble.sims()
    rng = np.random.default_rng(config.seed)
    vi = mean_pairwise_vi(sims.plans, rmap.pop, config.vi_pairs, rng) if len(sims) >= 2 else 0.0
    flags.append(Flag("mean_pairwise_vi", vi >= config.vi_min, vi, config.vi_min))

    acc_by_chain = meta.get("stage_acceptance", {})
    n_stages = max((len(a) for a in acc_by_chain.values()), default=0)
    acc = [min(a[s] for a in acc_by_chain.values() if len(a) > s) for s in range(n_stages)]
    low = bottleneck_check(acc, config.acceptance_min)
    flags.append(Flag("stage_acceptance", not low, min(acc) if acc else None, config.acceptance_min,
                      detail=("live-particle heuristic; low stages: " + ", ".join(str(s) for s, _ in low))
                      if low else "live-particle heuristic"))

    rhats = {}
    chains = np.unique(sims.chain)
    if len(chains) < 2:
        flags.append(Flag("rhat", False, None, config.rhat_max, advisory=not config.strict,
                          detail="single chain: R-hat omitted"))
    else:
        sim_stats = stats[stats["chain"].astype(str) != ""]
        for col in RHAT_COLUMNS:
            if col not in sim_stats or sim_stats[col].isna().all():
                continue
            per_draw = plan_level(sim_stats, col)
            chain_of = sim_stats.groupby("draw", sort=False)["chain"].first()
            groups = [per_draw[chain_of == c].to_numpy() for c in chain_of.unique()]
            if min(len(g) for g in groups) < 4:
                continue
            rhats[col] = rhat(groups)
        for col, v in rhats.items():
            flags.append(Flag(f"rhat:{col}", bool(v <= config.rhat_max), v, config.rhat_max,
                              advisory=False))

    return DiagnosticsReport(ess_frac, vi, rhats, acc, flags, ess_by_chain, opportunity)

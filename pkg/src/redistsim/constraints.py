"""Hard-constraint parameters and soft (Gibbs) energy terms."""
import importlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

KINDS = ("group_hinge", "splits_penalty", "custom")


@dataclass(frozen=True)
class SoftTerm:
    kind: str
    strength: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown soft constraint kind '{self.kind}'")
        if self.strength < 0:
            raise ConfigError("soft constraint strength must be >= 0")


@dataclass(frozen=True)
class ConstraintSpec:
    """Hard limits plus soft energy terms.

    ``admin_split_units`` names admin-unit layers whose total split count is
    capped at ``ndists - 1``. ``rho`` is the exponent on the spanning-forest
    compactness target.
    """

    pop_tol: float = 0.005
    admin_split_units: tuple = ()
    rho: float = 1.0
    soft_terms: tuple = ()

    def __post_init__(self):
        if not 0 < self.pop_tol < 1:
            raise ConfigError("pop_tol must lie in (0, 1)")
        if self.rho < 0:
            raise ConfigError("rho must be >= 0")
        if isinstance(self.admin_split_units, str):
            object.__setattr__(self, "admin_split_units", (self.admin_split_units,))
        object.__setattr__(self, "soft_terms", tuple(
            t if isinstance(t, SoftTerm) else SoftTerm(**t) for t in self.soft_terms))

    def scaled(self, factor):
        """Copy with every strength multiplied by ``factor``."""
        terms = tuple(SoftTerm(t.kind, t.strength * factor, t.params) for t in self.soft_terms)
        return ConstraintSpec(self.pop_tol, self.admin_split_units, self.rho, terms)


def group_hinge_energy(share, target, exponent=2.0):
    """max(0, target - share) ** exponent, elementwise."""
    share = np.asarray(share, dtype=float)
    if np.any((share < 0) | (share > 1)) or not 0 <= target <= 1:
        raise DomainError("shares and target must lie in [0, 1]")
    if exponent <= 0:
        raise DomainError("exponent must be positive")
    out = np.maximum(target - share, 0.0) ** exponent
    return float(out) if out.ndim == 0 else out


def splits_energy(plan, units):
    """Total splits: sum over units of (districts intersecting the unit - 1)."""
    plan = np.asarray(plan)
    units = np.asarray(units)
    if plan.shape != units.shape:
        raise ShapeError("units and plan differ in length")
    if plan.size == 0:
        return 0
    _, codes = np.unique(units, return_inverse=True)
    pairs = np.unique(np.column_stack([codes, plan]), axis=0)
    return int(len(pairs) - codes.max() - 1)


def _hinge_terms(term, rmap, groups, totals):
    p = term.params
    target = p.get("target", 0.52)
    exponent = p.get("exponent", 2.0)
    k = p.get("n_districts")
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(totals > 0, groups / np.where(totals > 0, totals, 1), 0.0)
    share = np.clip(share, 0.0, 1.0)
    if k is not None:
        share = np.sort(share)[::-1][:int(k)]
    return float(np.sum(group_hinge_energy(share, target, exponent)))


def _load_callable(path):
    mod, _, name = path.partition(":")
    try:
        return getattr(importlib.import_module(mod), name)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot import custom energy '{path}'") from exc


def _term_energy(term, plan, rmap, complete, ndists):
    """Energy of one term on a (possibly partial) plan.

    In a partial plan label 0 marks the unassigned remainder; it is treated
    as one extra region for split counting and ignored by the hinge.
    """
    p = term.params
    if term.kind == "group_hinge":
        for key in ("group", "total"):
            if p.get(key, "vap") not in rmap.data.columns:
                raise ConfigError(f"group_hinge: column '{p.get(key, 'vap')}' not in map data")
        labels = plan[plan > 0]
        if labels.size == 0:
            return 0.0
        groups = np.bincount(labels - 1, rmap.data[p["group"]].to_numpy(float)[plan > 0],
                             minlength=ndists)
        totals = np.bincount(labels - 1, rmap.data[p.get("total", "vap")].to_numpy(float)[plan > 0],
                             minlength=ndists)
        present = np.unique(labels) - 1
        return _hinge_terms(term, rmap, groups[present], totals[present])
    if term.kind == "splits_penalty":
        name = p.get("units", "county")
        if name not in rmap.data.columns:
            raise ConfigError(f"splits_penalty: column '{name}' not in map data")
        return float(splits_energy(plan, rmap.units(name).codes))
    if term.kind == "custom":
        if not complete:
            return 0.0
        fn = p["function"]
        fn = _load_callable(fn) if isinstance(fn, str) else fn
        return float(fn(plan, rmap, **p.get("kwargs", {})))
    raise ConfigError(f"unknown soft constraint kind '{term.kind}'")


def total_energy(plan, rmap, spec):
    """Sum of strength * energy over all soft terms."""
    plan = np.asarray(plan)
    if plan.shape != (rmap.graph.n,):
        raise ShapeError("plan does not match map")
    return float(sum(t.strength * _term_energy(t, plan, rmap, True, rmap.ndists)
                     for t in spec.soft_terms if t.strength != 0))


def partial_energy(assignment, rmap, spec, complete):
    """Energy of a plan under construction (0 = not yet assigned).

    Equals :func:`total_energy` once ``complete``; used to spread the soft
    penalty over sampler stages.
    """
    return float(sum(t.strength * _term_energy(t, assignment, rmap, complete, rmap.ndists)
                     for t in spec.soft_terms if t.strength != 0))

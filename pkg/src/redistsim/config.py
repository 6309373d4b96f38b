"""Run configuration: one YAML (or JSON) document per run."""
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .constraints import KINDS, ConstraintSpec, SoftTerm
from .diagnostics import DiagnosticsConfig
from .errors import ConfigError
from .sampler import SamplerParams


@dataclass
class MapConfig:
    attributes: Path
    adjacency: Path = None
    geometry: Path = None
    pop_col: str = "pop"
    snap: float = 1e-9


@dataclass
class RunConfig:
    map: MapConfig
    ndists: int
    pop_tol: float = 0.005
    admin_units: tuple = ()
    rho: float = 1.0
    soft_terms: tuple = ()
    sampler: SamplerParams = field(default_factory=SamplerParams)
    thin: int = None
    elections: list = None
    year_columns: bool = False
    reference: tuple = ()
    match_to: str = None
    opportunity_group: str = None
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    output: Path = None

    def constraint_spec(self):
        return ConstraintSpec(self.pop_tol, tuple(self.admin_units), self.rho, tuple(self.soft_terms))

    def input_paths(self):
        return [p for p in (self.map.attributes, self.map.adjacency, self.map.geometry) if p is not None]


_TOP = {"map", "ndists", "pop_tol", "admin_units", "constraints", "sampler", "elections",
        "year_columns", "reference", "match_to", "opportunity_group", "diagnostics", "output"}


def _need(d, key, where, kind=None):
    if key not in d:
        raise ConfigError(f"{where}{key}: required field missing")
    return _typed(d[key], f"{where}{key}", kind)


def _typed(value, where, kind):
    if kind is None or value is None:
        return value
    try:
        if kind is int and (isinstance(value, bool) or float(value) != int(value)):
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {kind.__name__}, got {value!r}") from None


def _section(raw, name, cls, where=""):
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{where}{name}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    out = {}
    for k, v in sec.items():
        if k not in known:
            raise ConfigError(f"{where}{name}.{k}: unknown field")
        default = known[k].default
        kind = type(default) if default is not None and not isinstance(default, Path) else None
        if kind is float and isinstance(v, int):
            v = float(v)
        out[k] = _typed(v, f"{where}{name}.{k}", kind)
    return out


def parse_config(raw, base_dir="."):
    """Validate a config mapping; file paths resolve against ``base_dir``."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a mapping at top level")
    unknown = sorted(set(raw) - _TOP)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field")
    base = Path(base_dir)

    m = raw.get("map")
    if not isinstance(m, dict):
        raise ConfigError("map: required section missing")
    for k in m:
        if k not in {f.name for f in fields(MapConfig)}:
            raise ConfigError(f"map.{k}: unknown field")
    attrs = _need(m, "attributes", "map.", str)
    if m.get("adjacency") is None and m.get("geometry") is None:
        raise ConfigError("map.adjacency: required unless map.geometry is given")
    mapcfg = MapConfig(
        attributes=base / attrs,
        adjacency=base / m["adjacency"] if m.get("adjacency") else None,
        geometry=base / m["geometry"] if m.get("geometry") else None,
        pop_col=_typed(m.get("pop_col", "pop"), "map.pop_col", str),
        snap=_typed(m.get("snap", 1e-9), "map.snap", float),
    )

    ndists = _need(raw, "ndists", "", int)
    if ndists < 1:
        raise ConfigError("ndists: must be >= 1")
    pop_tol = _typed(raw.get("pop_tol", 0.005), "pop_tol", float)
    if not 0 < pop_tol < 1:
        raise ConfigError("pop_tol: must lie in (0, 1)")
    units = raw.get("admin_units") or ()
    units = (units,) if isinstance(units, str) else tuple(units)

    cons = raw.get("constraints") or {}
    if not isinstance(cons, dict):
        raise ConfigError("constraints: expected a mapping")
    for k in cons:
        if k not in ("rho", "soft"):
            raise ConfigError(f"constraints.{k}: unknown field")
    rho = _typed(cons.get("rho", 1.0), "constraints.rho", float)
    if rho < 0:
        raise ConfigError("constraints.rho: must be >= 0")
    terms = []
    for i, t in enumerate(cons.get("soft") or []):
        where = f"constraints.soft[{i}]"
        if not isinstance(t, dict):
            raise ConfigError(f"{where}: expected a mapping")
        kind = _need(t, "kind", f"{where}.", str)
        if kind not in KINDS:
            raise ConfigError(f"{where}.kind: unknown kind '{kind}' (expected one of {', '.join(KINDS)})")
        strength = _typed(t.get("strength", 0.0), f"{where}.strength", float)
        if strength < 0:
            raise ConfigError(f"{where}.strength: must be >= 0")
        params = t.get("params") or {}
        if kind == "group_hinge" and "group" not in params:
            raise ConfigError(f"{where}.params.group: required for group_hinge")
        if kind == "custom" and "function" not in params:
            raise ConfigError(f"{where}.params.function: required for custom")
        terms.append(SoftTerm(kind, strength, params))

    samp_raw = raw.get("sampler") or {}
    if not isinstance(samp_raw, dict):
        raise ConfigError("sampler: expected a mapping")
    samp_raw = dict(samp_raw)
    thin = _typed(samp_raw.pop("thin", None), "sampler.thin", int)
    if "rho" in samp_raw:
        alias = _typed(samp_raw.pop("rho"), "sampler.rho", float)
        if "rho" in cons and alias != rho:
            raise ConfigError("sampler.rho: conflicts with constraints.rho")
        rho = alias
        if rho < 0:
            raise ConfigError("sampler.rho: must be >= 0")
    samp = _section({"sampler": samp_raw}, "sampler", SamplerParams)
    try:
        sampler = SamplerParams(**samp)
    except Exception as exc:
        raise ConfigError(f"sampler.{exc}") from None

    elections = raw.get("elections")
    if elections is not None and not isinstance(elections, list):
        raise ConfigError("elections: expected a list")

    ref = raw.get("reference") or ()
    ref = (ref,) if isinstance(ref, str) else tuple(str(r) for r in ref)
    match_to = raw.get("match_to")
    if match_to is not None and match_to not in ref:
        ref = ref + (match_to,)

    diag = _section(raw, "diagnostics", DiagnosticsConfig)
    out = raw.get("output")
    return RunConfig(
        map=mapcfg, ndists=ndists, pop_tol=pop_tol, admin_units=units, rho=rho,
        soft_terms=tuple(terms), sampler=sampler, thin=thin, elections=elections,
        year_columns=bool(raw.get("year_columns", False)), reference=ref, match_to=match_to,
        opportunity_group=raw.get("opportunity_group"),
        diagnostics=DiagnosticsConfig(**diag), output=base / out if out else None,
    )


def load_config(path):
    path = Path(path)
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: cannot parse {path}: {exc}") from None
    return parse_config(raw, path.parent)

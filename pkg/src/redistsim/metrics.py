"""District- and plan-level summary statistics."""
import re
import warnings
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ConfigError, GeometryUnavailable, ShapeError
from .ingest import NO_MUNI, VAP_GROUPS, district_area_perimeter

ELECTION_RE = re.compile(r"^(?P<office>[a-z]+)_(?P<year>\d{2})_(?P<party>dem|rep)_(?P<cand>\w+)$")

STATS_COLUMNS = (
    "draw", "chain", "district", "total_pop", "plan_dev", "comp_edge", "comp_polsby",
    "county_splits", "muni_splits", "vap", *VAP_GROUPS,
    "ndv", "nrv", "ndshare", "e_dvs", "pr_dem", "e_dem", "pbias", "egap",
)


@dataclass(frozen=True)
class Election:
    office: str
    year: str
    dem: tuple
    rep: tuple

    @property
    def name(self):
        return f"{self.office}_{self.year}"


@dataclass(frozen=True)
class ElectionSet:
    elections: tuple

    def __post_init__(self):
        for el in self.elections:
            if not el.dem or not el.rep:
                raise ConfigError(f"election '{el.name}' needs both dem and rep columns")

    def __len__(self):
        return len(self.elections)

    def __iter__(self):
        return iter(self.elections)

    @property
    def years(self):
        return sorted({el.year for el in self.elections})

    @classmethod
    def from_columns(cls, columns):
        """Detect ``{office}_{yy}_{party}_{cand}`` columns, grouped by office and year.

        Several candidates of one party in the same race are summed.
        """
        found = defaultdict(lambda: {"dem": [], "rep": []})
        for col in columns:
            m = ELECTION_RE.match(col)
            if m:
                found[(m["office"], m["year"])][m["party"]].append(col)
        out = []
        for (office, year), cols in sorted(found.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            if cols["dem"] and cols["rep"]:
                out.append(Election(office, year, tuple(cols["dem"]), tuple(cols["rep"])))
        return cls(tuple(out))

    @classmethod
    def from_config(cls, items):
        out = []
        for i, it in enumerate(items):
            try:
                dem, rep = it["dem"], it["rep"]
            except KeyError as exc:
                raise ConfigError(f"elections[{i}]: missing {exc.args[0]}") from None
            dem = (dem,) if isinstance(dem, str) else tuple(dem)
            rep = (rep,) if isinstance(rep, str) else tuple(rep)
            m = ELECTION_RE.match(dem[0])
            office = it.get("office", m["office"] if m else f"e{i}")
            year = str(it.get("year", m["year"] if m else "00"))
            out.append(Election(office, year[-2:], dem, rep))
        return cls(tuple(out))

    def votes(self, data):
        """(n_elections, n_nodes) dem and rep vote matrices."""
        if not self.elections:
            raise ConfigError("no elections configured")
        cols = set(data.columns)
        for el in self.elections:
            for c in el.dem + el.rep:
                if c not in cols:
                    raise ConfigError(f"election column '{c}' not in map data")
        dem = np.vstack([data[list(el.dem)].to_numpy(float).sum(axis=1) for el in self.elections])
        rep = np.vstack([data[list(el.rep)].to_numpy(float).sum(axis=1) for el in self.elections])
        return dem, rep


def comp_polsby(area, perimeter):
    """Polsby-Popper score 4 pi A / P^2."""
    if area is None or perimeter is None:
        raise GeometryUnavailable("district geometry is unavailable")
    area = np.asarray(area, dtype=float)
    perimeter = np.asarray(perimeter, dtype=float)
    return 4 * np.pi * area / perimeter ** 2


def comp_edge(plan, g):
    """Fraction of graph edges whose endpoints share a district."""
    plan = np.asarray(plan)
    if plan.shape != (g.n,):
        raise ShapeError("plan does not match graph")
    if g.n_edges == 0:
        return 1.0
    return float(np.mean(plan[g.edges[:, 0]] == plan[g.edges[:, 1]]))


def max_deviation(district_pops):
    """max_d |pop_d - parity| / parity."""
    d = np.asarray(district_pops, dtype=float)
    parity = d.sum() / len(d)
    return float(np.max(np.abs(d - parity)) / parity)


def plan_dev(plan, pops, ndists=None):
    plan = np.asarray(plan)
    pops = np.asarray(pops, dtype=float)
    if plan.shape != pops.shape:
        raise ShapeError("plan and population vectors differ in length")
    ndists = ndists or int(plan.max())
    return max_deviation(np.bincount(plan - 1, weights=pops, minlength=ndists))


def splits_count(plan, units, ignore=None):
    """Sum over units of (number of districts intersecting the unit - 1).

    Nodes whose unit equals ``ignore`` (e.g. the no-municipality sentinel)
    are skipped.
    """
    plan = np.asarray(plan)
    units = np.asarray(units)
    if plan.shape != units.shape:
        raise ShapeError("units and plan differ in length")
    if ignore is not None:
        keep = units != ignore
        plan, units = plan[keep], units[keep]
    if plan.size == 0:
        return 0
    _, codes = np.unique(units, return_inverse=True)
    pairs = np.unique(codes.astype(np.int64) * (int(plan.max()) + 1) + plan)
    return int(len(pairs) - codes.max() - 1)


def district_votes(plan, dem, rep, ndists):
    """Per-election district totals from node-level vote matrices."""
    idx = np.asarray(plan) - 1
    d = np.vstack([np.bincount(idx, weights=row, minlength=ndists) for row in dem])
    r = np.vstack([np.bincount(idx, weights=row, minlength=ndists) for row in rep])
    return d, r


def aggregate_elections(plan, data, elections, ndists):
    """ndv/nrv plus per-year adv_yy/arv_yy district columns."""
    if len(elections) == 0:
        raise ConfigError("no elections configured")
    dem, rep = elections.votes(data)
    d, r = district_votes(plan, dem, rep, ndists)
    out = {"ndv": d.mean(axis=0), "nrv": r.mean(axis=0)}
    years = np.array([el.year for el in elections])
    for y in elections.years:
        sel = years == y
        out[f"adv_{y}"] = d[sel].mean(axis=0)
        out[f"arv_{y}"] = r[sel].mean(axis=0)
    return out


def _shares(d, r):
    tot = d + r
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tot > 0, d / np.where(tot > 0, tot, 1), np.nan)


def partisan_district_stats(d, r):
    """Per-district e_dvs and pr_dem from (elections, districts) vote totals.

    Cells with no two-party votes are treated as missing; a tie is not a
    Democratic win.
    """
    d = np.atleast_2d(np.asarray(d, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    share = _shares(d, r)
    won = np.where(np.isnan(share), np.nan, (d > r).astype(float))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(share, axis=0), np.nanmean(won, axis=0)


def e_dem(d, r):
    """Mean over elections of the number of districts the Democrat wins."""
    d = np.atleast_2d(np.asarray(d, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    return float(np.mean(np.sum(d > r, axis=1)))


def pbias(d, r):
    """Partisan bias under uniform swing to a 50% statewide vote.

    Positive values favor Republicans. A district exactly at 50% after the
    swing counts as half a seat, which keeps the measure antisymmetric in
    the parties.
    """
    d = np.atleast_2d(np.asarray(d, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    t = d + r
    dt, tt = d.sum(axis=1, keepdims=True), t.sum(axis=1, keepdims=True)
    # district share > statewide share, cross-multiplied to keep the party swap exact
    lhs, rhs = d * tt, dt * t
    live = t > 0
    seats = np.where(live, (lhs > rhs) + 0.5 * (lhs == rhs), 0.0).sum(axis=1)
    seat_share = seats / live.sum(axis=1)
    return float(np.mean(0.5 - seat_share))


def egap(d, r):
    """Efficiency gap (wasted D - wasted R) / total, averaged over elections.

    A tied district counts as half won by each party, so both waste t/4 and
    the measure stays exactly antisymmetric in the parties.
    """
    d = np.atleast_2d(np.asarray(d, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    t = d + r
    won = np.where(d > r, 1.0, np.where(d < r, 0.0, 0.5))
    wasted_d = d - won * t / 2
    wasted_r = r - (1 - won) * t / 2
    return float(np.mean((wasted_d.sum(axis=1) - wasted_r.sum(axis=1)) / t.sum(axis=1)))


def opportunity_districts(plan, rmap, group, elections, total_white="vap_white"):
    """Districts where the Democrat wins on average and ``group`` VAP exceeds white VAP."""
    if group not in VAP_GROUPS or group not in rmap.data.columns:
        raise ConfigError(f"unknown VAP subgroup '{group}'")
    plan = np.asarray(plan)
    k = rmap.ndists
    dem, rep = elections.votes(rmap.data)
    d, r = district_votes(plan, dem, rep, k)
    share, _ = partisan_district_stats(d, r)
    g = np.bincount(plan - 1, weights=rmap.data[group].to_numpy(float), minlength=k)
    w = np.bincount(plan - 1, weights=rmap.data[total_white].to_numpy(float), minlength=k)
    return int(np.sum((share > 0.5) & (g > w)))


def _plan_rows(plan, rmap, votes, elections, year_columns):
    k = rmap.ndists
    data = rmap.data
    idx = plan - 1
    pop = np.bincount(idx, weights=rmap.pop, minlength=k)
    rows = {"district": np.arange(1, k + 1), "total_pop": pop,
            "plan_dev": max_deviation(pop), "comp_edge": comp_edge(plan, rmap.graph)}
    area, perim = district_area_perimeter(plan, rmap, k)
    rows["comp_polsby"] = comp_polsby(area, perim) if area is not None else np.nan
    rows["county_splits"] = splits_count(plan, data["county"].to_numpy()) if "county" in data else np.nan
    rows["muni_splits"] = (splits_count(plan, data["muni"].to_numpy(), ignore=NO_MUNI)
                           if "muni" in data else np.nan)
    for col in ("vap", *VAP_GROUPS):
        rows[col] = (np.bincount(idx, weights=data[col].to_numpy(float), minlength=k)
                     if col in data else np.nan)
    if votes is None:
        for col in ("ndv", "nrv", "ndshare", "e_dvs", "pr_dem", "e_dem", "pbias", "egap"):
            rows[col] = np.nan
        return rows
    d, r = district_votes(plan, *votes, k)
    rows["ndv"], rows["nrv"] = d.mean(axis=0), r.mean(axis=0)
    rows["ndshare"] = _shares(rows["ndv"], rows["nrv"])
    rows["e_dvs"], rows["pr_dem"] = partisan_district_stats(d, r)
    rows["e_dem"] = e_dem(d, r)
    rows["pbias"] = pbias(d, r)
    rows["egap"] = egap(d, r)
    if year_columns:
        years = np.array([el.year for el in elections])
        for y in elections.years:
            rows[f"adv_{y}"] = d[years == y].mean(axis=0)
            rows[f"arv_{y}"] = r[years == y].mean(axis=0)
    return rows


def summarize(ensemble, rmap, elections=None, year_columns=False):
    """Long-format statistics table: one row per (draw, district)."""
    if elections is None:
        elections = ElectionSet.from_columns(rmap.data.columns)
    votes = elections.votes(rmap.data) if len(elections) else None
    k = ensemble.ndists
    cols = list(STATS_COLUMNS)
    if year_columns and votes is not None:
        cols += [f"{p}_{y}" for y in elections.years for p in ("adv", "arv")]
    columns = defaultdict(list)
    for i in range(len(ensemble)):
        rows = _plan_rows(ensemble.plans[i], rmap, votes, elections, year_columns and votes is not None)
        rows["draw"] = str(ensemble.draw[i])
        rows["chain"] = "" if ensemble.reference[i] else str(ensemble.chain[i])
        for c in cols:
            columns[c].append(np.broadcast_to(rows[c], (k,)))
    if not len(ensemble):
        return pd.DataFrame(columns=cols)
    out = {}
    for c in cols:
        arr = np.concatenate(columns[c])
        out[c] = arr.astype(object) if c in ("draw", "chain") else arr
    return pd.DataFrame(out, columns=cols)


def plan_level(stats, column):
    """One value per draw: first row for plan-level columns, mean for district-level."""
    g = stats.groupby("draw", sort=False)[column]
    return g.mean() if column in ("comp_polsby",) else g.first()

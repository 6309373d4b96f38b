"""Synthetic grid instances with unit-square geometry, used by tests and scripts."""
import numpy as np
import pandas as pd
from shapely.geometry import box

from .graph import grid_graph
from .ingest import VAP_GROUPS, RedistMap, derive_edge_lengths, normalize_attributes


def grid_attributes(rows, cols, pop=None, counties=None, rng=None, elections=2):
    """Attribute table for a rows x cols grid.

    Every precinct holds 100 people unless ``pop`` is given.
    ``counties`` is an optional (block_rows, block_cols) size; precincts are
    grouped into county blocks of that shape. Vote and VAP columns are drawn
    from a smooth east-west partisan gradient so partisan statistics vary
    across plans.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    n = rows * cols
    r, c = np.divmod(np.arange(n), cols)
    pop = np.full(n, 100, dtype=np.int64) if pop is None else np.broadcast_to(pop, (n,)).astype(np.int64)
    df = pd.DataFrame({"geoid": [f"g{i:05d}" for i in range(n)]})
    if counties is not None:
        br, bc = counties
        df["county"] = [f"c{(a // br):02d}{(b // bc):02d}" for a, b in zip(r, c)]
    else:
        df["county"] = "c0000"
    df["muni"] = np.where((r < rows // 2) & (c < cols // 2), "m01", "<none>")
    df["pop"] = pop
    vap = np.floor(pop * 0.75).astype(np.int64)
    df["vap"] = vap
    black_frac = np.clip(0.1 + 0.5 * (r / max(rows - 1, 1)) * (c / max(cols - 1, 1)), 0, 0.7)
    black = np.floor(vap * black_frac).astype(np.int64)
    hisp = np.floor(vap * 0.1).astype(np.int64)
    rest = vap - black - hisp
    white = np.floor(rest * 0.8).astype(np.int64)
    other = rest - white
    df["vap_hisp"] = hisp
    df["vap_white"] = white
    df["vap_black"] = black
    for g in VAP_GROUPS:
        if g not in df:
            df[g] = 0
    df["vap_two"] = other
    lean = 0.35 + 0.3 * c / max(cols - 1, 1)
    offices = ["pre_16", "uss_18", "gov_18", "pre_20"][:elections]
    for k, off in enumerate(offices):
        share = np.clip(lean + rng.normal(0, 0.05, n) + 0.02 * (k - 1), 0.02, 0.98)
        turnout = np.maximum(np.floor(vap * 0.6), 1)
        dem = np.floor(turnout * share).astype(np.int64)
        df[f"{off}_dem_aaa"] = dem
        df[f"{off}_rep_bbb"] = (turnout - dem).astype(np.int64)
    return normalize_attributes(df)


def grid_map(rows, cols, ndists, pop_tol=0.005, pop=None, counties=None, geometry=True,
             admin_units=(), rng=None, elections=2):
    """RedistMap on a rook grid of unit squares."""
    g = grid_graph(rows, cols)
    df = grid_attributes(rows, cols, pop, counties, rng, elections)
    polys = area = perim = lengths = None
    if geometry:
        polys = [box(c, -r - 1, c + 1, -r) for r in range(rows) for c in range(cols)]
        area, perim, lengths = derive_edge_lengths(polys, g)
    rmap = RedistMap(g, df, ndists, pop_tol, {}, "pop", area, perim, lengths, polys)
    for name in admin_units:
        rmap.units(name)
    return rmap


def bands(rows, cols, ndists):
    """Equal-size row-major bands; a stand-in for an enacted plan."""
    n = rows * cols
    return np.arange(n) * ndists // n + 1


def write_instance(out, rows=10, cols=10, ndists=4, pop_tol=0.05, counties=None, seed=0,
                   nsims=500, nchains=2, split_cap=True):
    """Write map files plus ``config.yaml`` for a grid instance; returns the config path.

    With ``counties`` set and ``split_cap`` true, the config caps county splits.
    """
    import yaml
    from pathlib import Path

    from .ingest import save_map

    out = Path(out)
    admin = ("county",) if counties is not None and split_cap else ()
    rmap = grid_map(rows, cols, ndists, pop_tol, counties=counties, rng=np.random.default_rng(seed))
    rmap.data["enacted"] = bands(rows, cols, ndists)
    paths = save_map(rmap, out)
    cfg = {
        "map": {"attributes": paths["attributes"].name, "adjacency": paths["adjacency"].name,
                "geometry": paths["geometry"].name},
        "ndists": ndists,
        "pop_tol": pop_tol,
        "admin_units": list(admin),
        "sampler": {"nsims": nsims, "nchains": nchains, "seed": seed},
        "reference": ["enacted"],
        "match_to": "enacted",
        "opportunity_group": "vap_black",
        "output": "run",
    }
    with open(out / "config.yaml", "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=False)
    return out / "config.yaml"

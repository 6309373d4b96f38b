"""Assemble a problem instance from attribute, adjacency and geometry files."""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import shapely
from shapely.geometry import mapping, shape

from .errors import (GeometryError, JoinError, NotConnected, SchemaError,
                     ShapeError)
from .graph import Graph, build_graph

NO_MUNI = "<none>"
VAP_GROUPS = ("vap_hisp", "vap_white", "vap_black", "vap_aian",
              "vap_asian", "vap_nhpi", "vap_other", "vap_two")
DEFAULT_SNAP = 1e-9


@dataclass(frozen=True, eq=False)
class AdminUnits:
    """A node-level categorical layer (county, municipality, ...)."""

    name: str
    labels: tuple
    codes: np.ndarray

    @classmethod
    def from_values(cls, name, values):
        codes, uniques = pd.factorize(pd.Series(values, dtype=str), sort=True)
        return cls(name, tuple(uniques), codes.astype(np.int64))

    @property
    def n_units(self):
        return len(self.labels)


@dataclass(eq=False)
class RedistMap:
    """Precinct graph joined with attributes and problem parameters.

    ``data`` is aligned row-for-row with graph nodes. Geometric inputs are
    optional; when present, ``edge_lengths[i]`` is the shared boundary length
    of ``graph.edges[i]``.
    """

    graph: Graph
    data: pd.DataFrame
    ndists: int
    pop_tol: float
    admin_units: dict = field(default_factory=dict)
    pop_col: str = "pop"
    area: np.ndarray = None
    perimeter: np.ndarray = None
    edge_lengths: np.ndarray = None
    polygons: list = None

    def __post_init__(self):
        if len(self.data) != self.graph.n:
            raise ShapeError("attribute rows and graph nodes differ in count")
        if self.ndists < 1:
            raise SchemaError("ndists must be at least 1")
        if not 0 < self.pop_tol < 1:
            raise SchemaError("pop_tol must lie in (0, 1)")
        if self.total_pop < self.ndists:
            raise SchemaError("total population is smaller than ndists")
        if self.graph.n > 1 and not self.graph.is_connected():
            raise NotConnected("precinct graph is not connected")
        for name, units in self.admin_units.items():
            if len(units.codes) != self.graph.n:
                raise ShapeError(f"admin unit '{name}' has wrong length")

    @property
    def geoids(self):
        return self.data["geoid"].tolist()

    @property
    def pop(self):
        return self.data[self.pop_col].to_numpy(dtype=float)

    @property
    def total_pop(self):
        return float(self.data[self.pop_col].sum())

    @property
    def parity(self):
        return self.total_pop / self.ndists

    @property
    def abs_tolerance(self):
        """Largest allowed absolute deviation from parity, in persons."""
        return self.pop_tol * self.parity

    @property
    def has_geometry(self):
        return self.area is not None and self.perimeter is not None and self.edge_lengths is not None

    def units(self, name):
        if name not in self.admin_units:
            self.admin_units[name] = AdminUnits.from_values(name, self.data[name])
        return self.admin_units[name]

    def summary(self):
        return {
            "nodes": self.graph.n,
            "edges": self.graph.n_edges,
            "ndists": self.ndists,
            "total_pop": self.total_pop,
            "parity": self.parity,
            "pop_tol": self.pop_tol,
            "abs_tolerance": self.abs_tolerance,
            "abs_tolerance_rounded": int(round(self.abs_tolerance)),
        }


def parity_tolerance(total_pop, ndists, pop_tol):
    """Absolute parity tolerance in persons."""
    return pop_tol * total_pop / ndists


def _read_attributes(path):
    df = pd.read_csv(path, dtype={"geoid": str, "county": str, "muni": str})
    return normalize_attributes(df)


def normalize_attributes(df):
    """Validate the attribute table and fill derived admin columns."""
    df = df.copy()
    for col in ("geoid", "pop"):
        if col not in df.columns:
            raise SchemaError(f"attributes: missing required column '{col}'")
    df["geoid"] = df["geoid"].astype(str)
    if df["geoid"].duplicated().any():
        dup = df.loc[df["geoid"].duplicated(), "geoid"].iloc[0]
        raise SchemaError(f"attributes: duplicate geoid '{dup}'")
    if "county" in df.columns:
        df["county"] = df["county"].astype(str)
        if "muni" not in df.columns:
            df["muni"] = NO_MUNI
        df["muni"] = df["muni"].fillna(NO_MUNI).astype(str)
        if "county_muni" not in df.columns:
            df["county_muni"] = np.where(df["muni"] == NO_MUNI, df["county"],
                                         df["county"] + "_" + df["muni"])

    counts = [c for c in df.columns if c in ("pop", "vap") or c in VAP_GROUPS]
    for c in counts:
        if df[c].isna().any() or (df[c] < 0).any():
            raise SchemaError(f"attributes: column '{c}' must be non-negative")
    if "vap" in df.columns:
        if (df["vap"] > df["pop"]).any():
            raise SchemaError("attributes: vap exceeds pop")
        groups = [g for g in VAP_GROUPS if g in df.columns]
        for g in groups:
            if (df[g] > df["vap"]).any():
                raise SchemaError(f"attributes: {g} exceeds vap")
        if len(groups) == len(VAP_GROUPS):
            gap = (df[list(groups)].sum(axis=1) - df["vap"]).abs()
            if (gap > 1e-6 * np.maximum(df["vap"], 1)).any():
                raise SchemaError("attributes: vap subgroups do not sum to vap")
    return df.reset_index(drop=True)


def _edges_from_adjacency(adj, geoids):
    pos = {g: i for i, g in enumerate(geoids)}
    missing = [g for g in geoids if g not in adj]
    if missing:
        raise JoinError(f"geoid '{missing[0]}' has no adjacency entry")
    edges = set()
    for g, nbrs in adj.items():
        if g not in pos:
            raise JoinError(f"adjacency geoid '{g}' is not in the attribute table")
        for h in nbrs:
            h = str(h)
            if h not in pos:
                raise JoinError(f"adjacency neighbor '{h}' is not in the attribute table")
            if g not in {str(x) for x in adj.get(h, ())}:
                raise SchemaError(f"adjacency is asymmetric between '{g}' and '{h}'")
            a, b = pos[g], pos[h]
            edges.add((min(a, b), max(a, b)) if a != b else (a, b))
    return sorted(edges)


def read_geometry(path):
    """GeoJSON feature collection -> {geoid: shapely geometry}."""
    with open(path) as fh:
        doc = json.load(fh)
    out = {}
    for i, feat in enumerate(doc.get("features", [])):
        props = feat.get("properties") or {}
        if "geoid" not in props:
            raise SchemaError(f"geometry: feature {i} lacks a geoid property")
        out[str(props["geoid"])] = _as_polygon(shape(feat["geometry"]), props["geoid"])
    return out


def _as_polygon(geom, name):
    if geom.geom_type not in ("Polygon", "MultiPolygon"):
        raise GeometryError(f"geometry for '{name}' is a {geom.geom_type}, not a polygon")
    if geom.is_empty or not geom.is_valid:
        raise GeometryError(f"geometry for '{name}' is not a valid polygon")
    return geom


def _snap(geoms, snap):
    if snap and snap > 0:
        return [shapely.set_precision(g, snap) for g in geoms]
    return list(geoms)


def _shared_lengths(geoms, snap):
    geoms = _snap([_as_polygon(g, i) for i, g in enumerate(geoms)], snap)
    tree = shapely.STRtree(geoms)
    left, right = tree.query(geoms, predicate="intersects")
    keep = left < right
    bounds = [g.boundary for g in geoms]
    out = {}
    for a, b in zip(left[keep].tolist(), right[keep].tolist()):
        length = shapely.intersection(bounds[a], bounds[b]).length
        if length > (snap or 0.0):
            out[(a, b)] = length
    return out


def derive_adjacency(geoms, snap=DEFAULT_SNAP):
    """Rook adjacency: pairs of polygons sharing a boundary of positive length."""
    return sorted(_shared_lengths(geoms, snap))


def derive_edge_lengths(geoms, graph, snap=DEFAULT_SNAP):
    """Areas, perimeters and shared lengths aligned with ``graph.edges``."""
    if len(geoms) != graph.n:
        raise ShapeError("geometry count differs from graph nodes")
    snapped = _snap([_as_polygon(g, i) for i, g in enumerate(geoms)], snap)
    area = np.array([g.area for g in snapped])
    perim = np.array([g.length for g in snapped])
    if (area <= 0).any():
        raise GeometryError("polygon with non-positive area")
    bounds = [g.boundary for g in snapped]
    lengths = np.array([shapely.intersection(bounds[u], bounds[v]).length
                        for u, v in graph.edges.tolist()])
    return area, perim, lengths


def load_map(attributes, adjacency=None, geometry=None, *, ndists, pop_tol=0.005,
             admin_units=(), pop_col="pop", snap=DEFAULT_SNAP):
    """Read attribute/adjacency/geometry files and return a :class:`RedistMap`."""
    df = _read_attributes(attributes) if not isinstance(attributes, pd.DataFrame) \
        else normalize_attributes(attributes)
    geoids = df["geoid"].tolist()

    polys = None
    if geometry is not None:
        by_id = geometry if isinstance(geometry, dict) else read_geometry(geometry)
        missing = [g for g in geoids if g not in by_id]
        if missing:
            raise JoinError(f"geoid '{missing[0]}' has no geometry feature")
        polys = [by_id[g] for g in geoids]

    if adjacency is not None:
        if isinstance(adjacency, dict):
            adj = adjacency
        else:
            with open(adjacency) as fh:
                adj = json.load(fh)
        adj = {str(k): [str(x) for x in v] for k, v in adj.items()}
        edges = _edges_from_adjacency(adj, geoids)
    elif polys is not None:
        edges = derive_adjacency(polys, snap)
    else:
        raise SchemaError("either an adjacency file or geometry is required")
    graph = build_graph(len(geoids), edges)

    area = perim = lengths = None
    if polys is not None:
        area, perim, lengths = derive_edge_lengths(polys, graph, snap)

    units = {}
    for name in admin_units:
        if name not in df.columns:
            raise SchemaError(f"admin unit column '{name}' not in attributes")
        units[name] = AdminUnits.from_values(name, df[name])

    return RedistMap(graph, df, int(ndists), float(pop_tol), units, pop_col,
                     area, perim, lengths, polys)


def adjacency_document(rmap):
    geoids = rmap.geoids
    return {g: [geoids[j] for j in rmap.graph.neighbors(i)] for i, g in enumerate(geoids)}


def save_map(rmap, directory):
    """Write attributes.csv, adjacency.json and (if present) geometry.geojson."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rmap.data.to_csv(d / "attributes.csv", index=False)
    with open(d / "adjacency.json", "w") as fh:
        json.dump(adjacency_document(rmap), fh)
    paths = {"attributes": d / "attributes.csv", "adjacency": d / "adjacency.json"}
    if rmap.polygons is not None:
        feats = [{"type": "Feature", "properties": {"geoid": g}, "geometry": mapping(p)}
                 for g, p in zip(rmap.geoids, rmap.polygons)]
        with open(d / "geometry.geojson", "w") as fh:
            json.dump({"type": "FeatureCollection", "features": feats}, fh)
        paths["geometry"] = d / "geometry.geojson"
    return paths


def exterior_lengths(rmap):
    """Boundary length of each precinct not shared with another precinct."""
    shared = np.zeros(rmap.graph.n)
    np.add.at(shared, rmap.graph.edges[:, 0], rmap.edge_lengths)
    np.add.at(shared, rmap.graph.edges[:, 1], rmap.edge_lengths)
    return rmap.perimeter - shared


def district_area_perimeter(plan, rmap, ndists):
    """District areas and perimeters by inclusion-exclusion over shared edges."""
    if not rmap.has_geometry:
        return None, None
    plan = np.asarray(plan)
    area = np.bincount(plan - 1, weights=rmap.area, minlength=ndists)
    perim = np.bincount(plan - 1, weights=rmap.perimeter, minlength=ndists)
    u, v = rmap.graph.edges[:, 0], rmap.graph.edges[:, 1]
    inside = plan[u] == plan[v]
    perim -= 2 * np.bincount(plan[u][inside] - 1, weights=rmap.edge_lengths[inside],
                             minlength=ndists)
    return area, perim


"""Plain-text run artifacts: plan tables, weights sidecar, statistics."""
import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import SchemaError
from .metrics import STATS_COLUMNS
from .sampler import PlanEnsemble

PLANS_LONG = "plans_long.csv"
PLANS_WIDE = "plans_wide.csv"
SIDECAR = "run.json"
STATS = "stats.csv"
REPORT = "diagnostics.json"
REPORT_TXT = "diagnostics.txt"


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _chain_str(e, i):
    return "" if e.reference[i] else str(int(e.chain[i]))


def plans_long_text(e, geoids):
    """One row per (draw, district) listing member geoids (space separated)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["draw", "chain", "district", "n_precincts", "geoids"])
    geoids = np.asarray(geoids, dtype=object)
    for i in range(len(e)):
        plan = e.plans[i]
        order = np.argsort(plan, kind="stable")
        bounds = np.searchsorted(plan[order], np.arange(1, e.ndists + 2))
        for d in range(e.ndists):
            members = geoids[order[bounds[d]:bounds[d + 1]]]
            w.writerow([e.draw[i], _chain_str(e, i), d + 1, len(members), " ".join(members)])
    return buf.getvalue()


def plans_wide_text(e, geoids):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["draw", "chain", *geoids])
    for i in range(len(e)):
        w.writerow([e.draw[i], _chain_str(e, i), *e.plans[i].tolist()])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def sidecar_text(e, extra=None):
    doc = {
        "ndists": e.ndists,
        "draw": [str(d) for d in e.draw],
        "chain": e.chain.tolist(),
        "reference": e.reference.tolist(),
        "weights": e.weights.tolist(),
        "meta": _jsonable(e.meta),
    }
    if extra:
        doc.update(_jsonable(extra))
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def write_ensemble(e, geoids, directory, extra=None):
    d = Path(directory)
    atomic_write(d / PLANS_LONG, plans_long_text(e, geoids))
    atomic_write(d / PLANS_WIDE, plans_wide_text(e, geoids))
    atomic_write(d / SIDECAR, sidecar_text(e, extra))


def read_sidecar(directory):
    with open(Path(directory) / SIDECAR) as fh:
        return json.load(fh)


def read_ensemble(directory):
    """Reload an ensemble from the wide plan file and sidecar."""
    d = Path(directory)
    side = read_sidecar(d)
    with open(d / PLANS_WIDE, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:2] != ["draw", "chain"]:
        raise SchemaError(f"{PLANS_WIDE}: unexpected header")
    draws = [r[0] for r in body]
    if draws != side["draw"]:
        raise SchemaError(f"{PLANS_WIDE} and {SIDECAR} disagree on draws")
    plans = np.array([[int(x) for x in r[2:]] for r in body], dtype=np.int32).reshape(len(body), -1)
    ref = np.array(side["reference"], dtype=bool)
    draw = [s if r else int(s) for s, r in zip(draws, ref)]
    e = PlanEnsemble(plans, side["weights"], side["chain"], draw, ref, side["ndists"], side["meta"])
    return e, header[2:]


def stats_text(stats):
    return stats.to_csv(index=False, lineterminator="\n")


def read_stats(path):
    df = pd.read_csv(path, dtype={"draw": str, "chain": str}, float_precision="round_trip")
    df["chain"] = df["chain"].fillna("")
    missing = [c for c in STATS_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaError(f"stats file lacks columns {missing}")
    return df

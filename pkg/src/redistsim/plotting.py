"""Static figures from a statistics table."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ConfigError  # noqa: E402


def _check_column(stats, column):
    if column not in stats.columns or column in ("draw", "chain"):
        raise ConfigError(f"unknown column '{column}'")


def ranked_matrix(stats, column):
    """(draws, districts) matrix with each row sorted ascending."""
    g = stats.groupby("draw", sort=False)[column]
    return np.vstack([np.sort(v.to_numpy(float)) for _, v in g])


def boxplot(stats, column, out, title=None):
    """One box per rank-ordered district; reference plans drawn as squares."""
    _check_column(stats, column)
    sims = stats[stats["chain"] != ""]
    refs = stats[stats["chain"] == ""]
    mat = ranked_matrix(sims, column)
    k = mat.shape[1]
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * k + 2), 4))
    ax.boxplot(mat, positions=np.arange(1, k + 1), widths=0.6,
               flierprops={"marker": ".", "markersize": 2, "markerfacecolor": "black"})
    markers = {}
    if len(refs):
        for name, v in refs.groupby("draw", sort=False)[column]:
            markers[name] = np.sort(v.to_numpy(float))
            ax.plot(np.arange(1, k + 1), markers[name], "s", color="red", markersize=5, label=name)
        ax.legend(loc="upper left", fontsize="small")
    ax.set_xlabel("district, ordered by " + column)
    ax.set_ylabel(column)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out, format="svg")
    plt.close(fig)
    return {"boxes": k, "draws": mat.shape[0], "references": markers}


def histogram(stats, column, out, bins=30, title=None):
    """Histogram of a plan-level column over simulated draws, references as lines."""
    _check_column(stats, column)
    first = stats.groupby("draw", sort=False).first()
    sims = first[first["chain"] != ""][column].to_numpy(float)
    refs = first[first["chain"] == ""][column]
    sims = sims[~np.isnan(sims)]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    counts, edges, _ = ax.hist(sims, bins=bins, color="0.6", edgecolor="white")
    for name, v in refs.items():
        ax.axvline(v, color="red", lw=1.5, label=name)
    if len(refs):
        ax.legend(fontsize="small")
    ax.set_xlabel(column)
    ax.set_ylabel("plans")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out, format="svg")
    plt.close(fig)
    return {"counts": counts, "edges": edges, "references": dict(refs)}

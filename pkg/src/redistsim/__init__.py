"""Sequential Monte Carlo sampling of redistricting plans."""
from .config import RunConfig, load_config, parse_config
from .constraints import ConstraintSpec, SoftTerm
from .diagnostics import DiagnosticsConfig, DiagnosticsReport, build_report, ess, rhat, vi_distance
from .errors import RedistError
from .graph import Graph, build_graph, count_spanning_trees, grid_graph, is_contiguous
from .ingest import RedistMap, load_map
from .metrics import ElectionSet, egap, pbias, summarize
from .sampler import PlanEnsemble, SamplerParams, match_numbers, smc_sample, thin

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "load_config", "parse_config", "ConstraintSpec", "SoftTerm",
    "DiagnosticsConfig", "DiagnosticsReport", "build_report", "ess", "rhat", "vi_distance",
    "RedistError", "Graph", "build_graph", "count_spanning_trees", "grid_graph", "is_contiguous",
    "RedistMap", "load_map", "ElectionSet", "egap", "pbias", "summarize",
    "PlanEnsemble", "SamplerParams", "match_numbers", "smc_sample", "thin",
]

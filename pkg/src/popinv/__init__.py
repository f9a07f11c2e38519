"""Popularity inference for caches from zero-censored request counts.

Fits the distribution of document popularities behind a request trace
(documents never requested are invisible), estimates the catalog size and
predicts LRU hit ratios with the Che approximation.
"""

__version__ = "0.1.0"

from .cache_model import (  # noqa: E402
    HitRatioCurve,
    PopularityVector,
    char_time_irm,
    char_time_irmm,
    hr_curve_model,
    hr_irm_stationary,
    hr_irm_transient,
    hr_irmm_stationary,
    hr_irmm_transient,
    r_of_t,
)
from .estimators import (  # noqa: E402
    EstimationResult,
    GridSpec,
    SolverConfig,
    estimate,
    naive_estimate,
    np_ml_estimate,
    pareto_ml_estimate,
    zipf_loglog_fit,
)
from .lru_sim import exit_time_probe, hr_curve_sim, lru_simulate, poisson_irm_simulate  # noqa: E402
from .mixture import DiscreteMixing, ParetoMixing, catalog_size_estimate, censored_pmf  # noqa: E402
from .reports import compare_hr, compare_mixture, mare  # noqa: E402
from .trace import (  # noqa: E402
    CountHistogram,
    DocumentCounts,
    RequestTrace,
    counts_from_trace,
    histogram_from_counts,
    ingest_trace,
    synth_delta,
    synth_pareto,
)

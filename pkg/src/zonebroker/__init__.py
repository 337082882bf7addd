"""zonebroker: trace-driven simulation of per-zone vehicular data brokers.

Vehicles stream through geohash zones; in each zone one vehicle at a time is
selected as the local data broker. Fixed-threshold online algorithms and a
switching ensemble compete to maximize cumulative service time under a
selection budget and permanent rejections.
"""

from .config import ConfigError, ExperimentConfig
from .events import ArrivalEvent, build_arrival_streams, detect_zone_changes
from .experiment import RunResult, run_experiment
from .geozone import (
    TrafficClass,
    ZoneKey,
    ZoneStats,
    classify_traffic,
    classify_zones,
    filter_inactive_zones,
    geohash_cell_bounds,
    geohash_encode,
    zone_numeric_id,
)
from .metrics import (
    IntervalRecord,
    ZoneOutcome,
    averages_by_class,
    best_algorithm_zone_counts,
    comparison_table,
    interval_winner_series,
)
from .selection import (
    AlgorithmSpec,
    BrokerAssignment,
    EnsembleState,
    ThresholdTable,
    build_threshold_table,
    ensemble_init,
    ensemble_on_arrival,
    ensemble_on_boundary,
    nearest_rank_percentile,
    run_zone_ensemble,
    run_zone_ensemble_fast,
    run_zone_fixed,
    tbo_decide,
)
from .synth import DwellRegime, SyntheticTraceSpec, generate_synthetic
from .trace import TraceRecord, TraceSet, load_trace, parse_record, replicate_trace

__version__ = "0.1.0"

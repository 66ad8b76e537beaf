"""Upper-bound carbon savings from temporal and spatial workload shifting."""
from .kernels import BACKEND
from .metrics import GLOBAL_AVG_CI, SavingsReport, aggregate, relative_savings, relative_to_global
from .spatial import (
    CapacityModel,
    LatencyMatrix,
    RegionCatalog,
    adjacent_ranking_savings,
    capacity_constrained,
    infinite_migration,
    latency_routing,
    one_migration,
    savings_matrix,
)
from .temporal import (
    ScheduleResult,
    schedule_baseline,
    schedule_deferred,
    schedule_interrupted,
    sweep_arrivals,
)
from .trace import (
    CarbonTrace,
    TraceError,
    classify_quadrant,
    compute_stats,
    detect_periodicity,
    kmeans_cluster,
    load_trace,
    trend_delta,
)
from .workload import Fixed, Job, Multiplier, OriginWeights, WorkloadMix, expected_savings, job_slots, mix_preset

__version__ = "0.1.0"

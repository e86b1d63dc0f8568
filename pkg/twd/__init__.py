from .errors import (
    TWDError, InfeasibleParametersError, SparsityUndefinedError, LiftError,
    UnknownVertexError, UnsupportedDimensionError, FileFormatError, IngestError, InternalError,
)
from .geometry import (
    PrecisionConfig, TorusPoint, Ordering, LandmarkSet, WitnessGrid, BucketGrid,
    torus_diff, sq_dist, cmp_dist, cmp_dist_offset, generate_net, estimate_net_params,
    sample_in_ball, range_query,
)
from .complex import SimplicialComplex
from .witness import WitnessComplex, WitnessRecord, build_witness_complex, update_witness_complex, witnessed_simplices
from .base_engine import EngineConfig, RunReport, PerturbationEngine
from .lll_engine import WitnessEngine, run_algorithm1
from .rdc import RelaxedDelaunay, RelaxedDelaunayEngine, build_rdc0, run_algorithm2

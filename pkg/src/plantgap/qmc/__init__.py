from .blocking import BlockingResult, blocking
from .sampler import (
    LARGE_PRESET,
    SMALL_PRESET,
    Chain,
    Estimates,
    InsufficientSamplesError,
    QmcParams,
    QmcSample,
    SamplerError,
    Segment,
    TransferMatrix,
    WorldlinePath,
    heat_bath_update,
    init_seed_path,
    measure,
    run_point,
    sample_boundaries,
    sample_subpath,
    sample_subpath_batch,
    segments_for_spin,
    sweep,
    transfer_matrix,
)

"""Two-channel GLR detection of a shared rank-one subspace signal.

A surveillance array and a reference array each observe L sensors of
colored Gaussian noise; the reference also carries a rank-one signature of
an unknown emitter waveform. The package provides the exact generalized
likelihood ratio test for whether the surveillance array carries the same
signature, two closed-form approximations, three baseline statistics, and
a reproducible Monte Carlo harness with a command-line front end.
"""

__version__ = "0.1.0"

from .covariance import (
    BeamformerPair,
    BlockSampleCov,
    ReducedForms,
    alpha_sr,
    block_sample_cov,
    build_reduced_forms,
    capon_pair,
    coherence_matrix,
    eta_rr,
    eta_sr,
    sample_cov,
    unitary_completion,
)
from .dataio import (
    read_snapshot_bin,
    read_snapshot_csv,
    read_snapshots,
    read_steering_csv,
    write_snapshot_bin,
    write_snapshot_csv,
    write_steering_csv,
)
from .detectors import (
    DETECTOR_NAMES,
    PROPOSED_DETECTORS,
    DegenerateSampleError,
    DetectorReport,
    NuSquared,
    compute_report,
    cross_corr_stat,
    glr_exact,
    glr_low,
    glr_sample,
    low_snr_qsr,
    m_matrix,
    ml_qsr,
    nu_squared,
    oracle_glr,
    sigma_max_coherence,
    svd_corr_stat,
)
from .model import (
    ChannelRealization,
    ScenarioConfig,
    SnapshotData,
    SteeringPair,
    draw_channel,
    draw_channel_gain,
    draw_noise_cov,
    draw_steering,
    population_cov,
    scale_noise_to_snr,
    substream,
    synth_snapshots,
    ula_steering,
)
from .montecarlo import (
    ExperimentConfig,
    PmPoint,
    RocCurve,
    SweepSpec,
    TrialRecord,
    calibrate_threshold,
    collect_stats,
    pm_at,
    roc_curve,
    run_null_dist,
    run_one_trial,
    run_pm_sweep,
    run_roc_experiment,
    run_trials,
    wilks_diag,
)
from .optimizer import (
    CostContext,
    OptimResult,
    TrustRegionOptions,
    cost_j,
    grad_j,
    hess_j,
    init_x,
    maximize_j,
)

__all__ = [name for name in dir() if not name.startswith("_")]

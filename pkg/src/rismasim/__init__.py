"""Simulator for jointly optimising BS precoding and a passive surface.

The library covers the channel model (planar/linear arrays, Rician links,
cell geometry), linear precoding baselines, the alternating sum-MSE solver
with its low-resolution variant, the single-user solvers, and a deterministic
Monte-Carlo experiment harness with a CSV contract.
"""

from .channel import (
    ChannelRealization,
    DegenerateConfigError,
    LinkParams,
    PlacementError,
    ScenarioConfig,
    SteeringConfig,
    UeLinkParams,
    UePlacement,
    composite_channel,
    generate_scenario,
    load_preset,
    load_scenario_config,
    pla_steering,
    place_ues,
    sample_bs_ris_channel,
    sample_direct_channel,
    sample_ris_ue_channel,
    scenario_config_from_dict,
    scenario_config_to_dict,
    table1_config,
    ula_steering,
)
from .precoders import Precoder, SingularChannelError, mmse, mrt, zf, zf_least_squares
from .risma import (
    RisProfile,
    SolveReport,
    SolverOptions,
    effective_rows,
    extract_physical,
    per_user_sinr,
    physical_profile,
    risma_solve,
    smse,
    sum_rate,
    surface_off_profile,
    update_v,
    update_w,
)
from .sdr import (
    SdpNonConvergence,
    SdpOptions,
    SdpProblem,
    SdpSolution,
    embed_hermitian,
    gaussian_randomize,
    lift_hermitian,
    psd_project,
    sdp_solve,
)
from .lorisma import (
    QuantizedConstellation,
    build_augmented,
    lorisma_solve,
    lorisma_v_step,
    project_to_constellation,
    project_unit_quantized,
    quantize_phase,
)
from .single_ue import (
    SingleUeInstance,
    SingleUeResult,
    mse_after_mrt,
    optimal_binary_activation,
    receive_snr,
    solve_p2_dc,
    solve_p3,
)
from .harness import (
    ExperimentSpec,
    ResultRow,
    antenna_equivalence,
    dbm_to_mw,
    experiment_preset,
    list_experiments,
    mean_rates,
    mw_to_dbm,
    power_scaling_study,
    rows_to_csv,
    run_experiment,
    write_csv,
)

__version__ = "0.1.0"

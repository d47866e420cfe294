"""omnisurf: link-level simulation and optimization for dual-sided
reconfigurable surfaces.

A surface panel of diode-tuned elements reflects part of an incident wave
back into the transmitter's half-space and refracts the rest through to the
far side; this package models the element physics, synthesizes channels,
optimizes hybrid beamforming over the discrete element states, trains
codebooks without channel knowledge, negotiates shared configurations
between access points, estimates cascaded channels group-wise and predicts
far-field patterns.
"""

__version__ = "0.1.0"

from ._kernels import backend as kernel_backend
from .element import (
    CircuitError,
    DesignReport,
    DiodeBranch,
    CircuitParams,
    ElementState,
    ElementStateTable,
    PhaseConfig,
    REFLECT,
    REFRACT,
    abcd_from_admittances,
    abcd_matrix,
    circuit_coefficients,
    coefficient,
    coupled_phase_table,
    discrete_phase_set,
    load_state_table,
    save_state_table,
    two_state_pin_table,
    validate_design_principles,
    zero_side,
)
from .channel import (
    BaseStation,
    ChannelSet,
    Scenario,
    ScenarioError,
    SurfacePanel,
    UserTerminal,
    cascaded_channel,
    classify_field_region,
    direct_path_amplitude,
    effective_area_mask,
    near_field_beam_area,
    path_loss,
    radiation_gain,
    rayleigh_distance,
    synthesize_channels,
)
from .beamform import (
    Beamformer,
    OptimizeResult,
    OptimizerOptions,
    RankDeficiencyError,
    alternating_optimize,
    exhaustive_oracle,
    mmse_precoder,
    sinr_and_rates,
    zero_forcing,
)
from .codebook import (
    BeamTrainResult,
    LobeCodebook,
    PipelineResult,
    PowerProbe,
    SectorCodebook,
    TrainingGeometry,
    beam_train,
    build_lobe_codebook,
    build_sector_codebook,
    codebook_pipeline,
    exhaustive_lobe_selection,
    trace_to_csv,
)
from .multicell import (
    ApState,
    CellNetwork,
    InterferenceCdf,
    InterferenceReport,
    NegotiationResult,
    NetworkChannels,
    build_network,
    centralized_exhaustive,
    evaluate_network,
    interference_cdf,
    local_update,
    negotiate,
    negotiation_summary_csv,
    negotiation_trace_csv,
    random_baseline,
    synthesize_network,
)
from .chanest import (
    ElementGrouping,
    GroupingError,
    LinearChannelModel,
    estimate,
    make_groups,
    model_csv,
    noisy_probe,
    physical_probe,
    predict,
)
from .pattern import (
    PatternError,
    PatternGrid,
    PatternMetrics,
    beam_pattern,
    element_field,
    pattern_csv,
    pattern_metrics,
    steer_config,
)
from .scenarios import (
    pattern_stripe_scenario,
    surface_comparison_scenario,
    two_room_network,
    two_user_training_setup,
)
from .errors import InfeasibleError

__all__ = [name for name in dir() if not name.startswith("_")]

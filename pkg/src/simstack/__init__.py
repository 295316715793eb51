"""simstack: physically consistent simulation of multilayer transmissive
metasurface links, with scattering- and transfer-parameter channel models,
closed-form medium providers, and sum-rate phase optimization."""

__version__ = "0.1.0"

from .channel import (
    ChannelRealization,
    RisLayer,
    SimStack,
    channel_exact_s,
    channel_exact_t,
    channel_simplified,
    wave_oracle_channel,
    wrap_phases,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config, validate_config
from .medium import (
    ArrayGeometry,
    DipoleMediumProvider,
    GeometryDegenerate,
    RayleighSommerfeldProvider,
    RsValidityWarning,
    dipole_medium,
    external_segments,
    rs_medium,
    sweep_geometry,
)
from .multiport import (
    BlockTwoPort,
    ConstraintMatrices,
    NonInvertibleTransfer,
    NonInvertibleTransmission,
    NumericsError,
    SingularCascade,
    SingularShift,
    SolveCounter,
    WaveVector,
    cascade_s,
    cascade_s21,
    cascade_s_chain,
    check_persymmetric,
    check_pseudo_unitary,
    check_symmetric,
    check_unitary,
    count_inversions_s,
    s_to_t,
    t_chain,
    t_to_s,
    z_to_s,
)
from .optimizer import (
    GdaResult,
    OptimizerSettings,
    PhaseDesign,
    PowerAllocation,
    gda_optimize,
    gradient_fd,
    init_phases,
    sinr,
    sum_rate,
    uniform_power,
    waterfilling_power,
)
from .experiments import (
    RunRecord,
    emit,
    run_convergence,
    run_custom,
    run_experiment,
    run_layer_sweep,
)

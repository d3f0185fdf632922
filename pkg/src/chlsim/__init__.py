"""Simulation laboratory for cylindrical Hastings-Levitov(0) growth."""
from .chain import (
    ChainState,
    HittingRecord,
    QuadratureError,
    drift_quadrature,
    halving_measure,
    l_squared_integral,
    new_chain,
    run_until_exit,
    second_moment_quadrature,
    sigma_star,
    step_chain,
)
from .geometry import (
    SLIT_BASE,
    ParameterError,
    SlitParams,
    TorusInterval,
    forward_map,
    interval_inverse,
    interval_shift,
    inverse_boundary,
    inverse_derivative,
    make_params,
    make_params_from_delta,
    point_shift,
)
from .marked import (
    DominationCertificate,
    MarkedConfiguration,
    RunRecord,
    UpdateEvent,
    apply_particle,
    certify_domination,
    certify_tree_completion,
    color_length,
    new_config,
    num_colors,
    replay_steps,
    track_degree,
    track_run,
    zero_mass,
)
from .montecarlo import (
    ExperimentConfig,
    SummaryStats,
    run_experiment,
    sweep_scaling,
    tail_estimate,
    zero_mass_decay,
)
from .process import ParticleEvent, Spine, render_svg, sample_event_stream, simulate

__version__ = "0.1.0"

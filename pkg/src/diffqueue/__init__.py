"""diffqueue: exact simulation of a load-balancing infinite-server network,
numerical integration of its diffusion limit, and the statistical harness
that checks they agree.
"""

from .errors import ConfigurationError, DiffQueueError, NumericsError, ReplicaError
from .model import (
    DerivedRates,
    ModelParams,
    delta,
    distance_to_G,
    limit_diffusion,
    limit_drift,
    pair_factor,
    prelimit_coeffs,
    route,
)
from .paths import QueuePath, SamplePath, sample_on_grid, uniform_grid
from .ctmc import (
    alt_centering,
    event_rates,
    functional_integral,
    initial_state,
    scale,
    simulate_queue,
    simulate_queue_on_grid,
)
from .sde import (
    FluidParams,
    SdeSpec,
    alt_scaling_sde,
    ellipticity_floor,
    em_ensemble,
    euler_maruyama,
    fluid_ode,
    limit_sde,
)
from .stats import (
    Ensemble,
    ResidualReport,
    krylov_ratio,
    ks_distance,
    ks_noise_floor,
    martingale_residual,
    occupation_near_G,
    run_ensemble,
    summarize,
)
from .rng import Stream, mix64, stream_seed
from .testfuncs import build_family

__version__ = "0.1.0"

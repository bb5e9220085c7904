"""Continuous-variable quantum secure direct communication simulator.

Gaussian-state engine, lossy tapped channel, the symmetric and asymmetric
protocol variants, and their analytic and simulated security curves.
"""

from .channel import ChannelParams, TapRecord, transmit
from .config import ConfigError, ProtocolConfig, load_config
from .distributions import Constant, Uniform
from .gaussian import (
    GaussianState,
    HomodyneResult,
    SymplecticOp,
    apply,
    attenuate,
    beam_splitter,
    coherent_state,
    db_to_z,
    homodyne_sample,
    homodyne_stats,
    mix_with_squeezed_vacuum,
    partial_trace,
    rotate,
    squeeze,
    squeezed_vacuum,
    tensor,
    vacuum,
)
from .protocol import PulseRecord, PulseTrain, Transcript, Verdict, eve_estimate, run_protocol
from .security import (
    AnalyticParams,
    SecrecyCurve,
    analytic_params,
    conditional_entropy,
    discrete_entropy,
    discrete_mutual_info,
    monte_carlo_mutual_info,
    mutual_info_asym,
    mutual_info_sym,
    secrecy_capacity,
    shannon_hartley,
    sweep,
    variance_of_product,
)

__version__ = "0.1.0"

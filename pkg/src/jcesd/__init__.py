"""Semi-blind joint channel estimation and detection for hybrid-precoded MU-MIMO OFDM."""

from .baseline import make_pattern, pilot_ce, theoretical_gain
from .channel import ChannelParams, gen_channel, to_frequency, transmit
from .config import SimConfig, load_config
from .convergence import init_bound_check, marcum_q, random_init_exceedance
from .harness import run_trial, sweep
from .metrics import MCS_TABLE, McsEntry, MetricsRow, link_adapt, nmse, throughput
from .modem import LlrParams, QamConstellation, llr, make_constellation
from .optimizer import FittingProblem, FittingSolution, solve
from .precoding import PrecoderSet, build_precoders
from .receiver import EstimationResult, ReceiverConfig, jcesd, semiblind_block

__version__ = "0.1.0"

__all__ = [
    "ChannelParams", "EstimationResult", "FittingProblem", "FittingSolution", "LlrParams",
    "MCS_TABLE", "McsEntry", "MetricsRow", "PrecoderSet", "QamConstellation",
    "ReceiverConfig", "SimConfig", "build_precoders", "gen_channel", "init_bound_check",
    "jcesd", "link_adapt", "llr", "load_config", "make_constellation", "make_pattern",
    "marcum_q", "nmse", "pilot_ce", "random_init_exceedance", "run_trial",
    "semiblind_block", "solve", "sweep", "theoretical_gain", "throughput",
    "to_frequency", "transmit",
]

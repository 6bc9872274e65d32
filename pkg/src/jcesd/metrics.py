"""Channel-estimation error, block-error throughput and link adaptation."""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .errors import InvalidArgumentError, UndefinedMetricError

NMSE_FLOOR_DB = -300.0
BLER_TARGET = 0.1
DECODE_MARGIN = 0.55


@dataclass(frozen=True)
class McsEntry:
    index: int
    modulation_order: int  # bits per symbol
    code_rate: float

    @property
    def constellation_size(self) -> int:
        return 2 ** self.modulation_order


MCS_TABLE = (
    McsEntry(5, 4, 0.396),
    McsEntry(10, 4, 0.643),
    McsEntry(11, 6, 0.455),
    McsEntry(19, 6, 0.853),
    McsEntry(20, 8, 0.667),
    McsEntry(27, 8, 0.926),
)
UNCODED_INDEX = -1


def mcs_entry(index) -> McsEntry:
    for e in MCS_TABLE:
        if e.index == index:
            return e
    raise InvalidArgumentError(f"no MCS entry with index {index}")


def uncoded(modulation) -> McsEntry:
    return McsEntry(UNCODED_INDEX, int(np.log2(modulation)), 1.0)


def nmse_ratio(H_hat, H):
    """Mean over subcarriers of ``||H_hat[j] - H[j]||^2 / ||H[j]||^2``."""
    H_hat = np.asarray(H_hat)
    H = np.asarray(H)
    if H_hat.shape != H.shape:
        raise InvalidArgumentError(f"shape mismatch {H_hat.shape} vs {H.shape}")
    H3 = H.reshape(-1, *H.shape[-2:]) if H.ndim >= 2 else H.reshape(-1, 1, 1)
    E3 = (H_hat - H).reshape(H3.shape)
    power = np.sum(np.abs(H3) ** 2, axis=(1, 2))
    if np.any(power == 0):
        raise UndefinedMetricError("true channel has zero norm on some subcarrier")
    return float(np.mean(np.sum(np.abs(E3) ** 2, axis=(1, 2)) / power))


def to_db(ratio) -> float:
    if ratio <= 0:
        return NMSE_FLOOR_DB
    return max(NMSE_FLOOR_DB, float(10.0 * np.log10(ratio)))


def nmse(H_hat, H) -> float:
    """NMSE in dB; an exact estimate reports ``NMSE_FLOOR_DB``."""
    return to_db(nmse_ratio(H_hat, H))


def decodes(raw_ber, code_rate, margin=DECODE_MARGIN) -> bool:
    """Idealized decoder: succeeds iff the raw BER is within ``margin (1 - rate)``."""
    return raw_ber <= margin * (1.0 - code_rate)


def throughput(detected_bits, truth_bits, mcs: McsEntry, overhead, block_size,
               margin=DECODE_MARGIN):
    """Credited information bits under the block-error model.

    ``detected_bits`` and ``truth_bits`` are ``(n_blocks, n_bits)``; each
    decodable block earns ``block_size * code_rate * (1 - overhead)``.

    Returns
    -------
    (float, int)
        Credited bits and the number of failed blocks.
    """
    det = np.atleast_2d(np.asarray(detected_bits))
    tru = np.atleast_2d(np.asarray(truth_bits))
    if det.shape != tru.shape:
        raise InvalidArgumentError("bit streams are not aligned")
    if not 0 <= overhead < 1:
        raise InvalidArgumentError("overhead must lie in [0, 1)")
    ber = np.mean(det != tru, axis=1) if det.shape[1] else np.zeros(det.shape[0])
    ok = np.array([decodes(b, mcs.code_rate, margin) for b in ber], dtype=bool)
    credit = block_size * mcs.code_rate * (1.0 - overhead)
    return float(ok.sum() * credit), int((~ok).sum())


def link_adapt(bler_history: Dict[int, float], target=BLER_TARGET) -> int:
    """Highest MCS index whose measured BLER is strictly below ``target``."""
    if not bler_history:
        raise InvalidArgumentError("empty BLER history")
    good = [i for i, b in bler_history.items() if b < target]
    return max(good) if good else min(bler_history)


@dataclass
class MetricsRow:
    snr_db: float
    seed: int
    user: int
    receiver: str
    nmse_db: float
    ser: float
    ber: float
    throughput_bits: float
    mcs_index: int
    blocks_failed: int
    runtime_ms: float
    op_counts: int  # optimizer iterations summed over blocks and TTIs

    FIELDS = ("snr_db", "seed", "user", "receiver", "nmse_db", "ser", "ber",
              "throughput_bits", "mcs_index", "blocks_failed", "runtime_ms", "op_counts")

    def cells(self):
        return [_fmt(getattr(self, f)) for f in self.FIELDS]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 10)) if np.isfinite(v) else repr(v)
    return str(v)

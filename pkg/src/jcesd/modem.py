"""Square Gray-mapped M-QAM with unit average power."""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvalidArgumentError

SUPPORTED_ORDERS = (4, 16, 64, 256)
LLR_VARIANCE_FLOOR = 1e-3


@dataclass(frozen=True, eq=False)
class QamConstellation:
    order: int
    points: np.ndarray = field(repr=False)
    boundary: float

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    @property
    def corner(self) -> complex:
        """Bottom-left corner point ``-lambda_M - i lambda_M``."""
        return complex(-self.boundary, -self.boundary)


@dataclass(frozen=True)
class LlrParams:
    noise_var: float
    floor: float = LLR_VARIANCE_FLOOR

    def __post_init__(self):
        if not self.floor > 0 or self.noise_var < self.floor:
            raise InvalidArgumentError("LlrParams requires noise_var >= floor > 0")

    @classmethod
    def from_snr(cls, snr, floor=LLR_VARIANCE_FLOOR):
        """``max(floor, 1/snr)``; ``snr`` is linear."""
        var = floor if snr <= 0 or not np.isfinite(1.0 / snr) else max(floor, 1.0 / snr)
        return cls(var, floor)


def _inverse_gray(g):
    n = g
    shift = g >> 1
    while shift:
        n ^= shift
        shift >>= 1
    return n


@lru_cache(maxsize=None)
def make_constellation(M: int) -> QamConstellation:
    """Gray-mapped square M-QAM, scaled to unit average power.

    Point ``idx`` carries the bits of ``idx`` (MSB first); the upper half
    of the bits selects the in-phase level and the lower half the
    quadrature level, each Gray coded.
    """
    if M not in SUPPORTED_ORDERS:
        raise InvalidArgumentError(f"unsupported QAM order {M}; expected one of {SUPPORTED_ORDERS}")
    side = int(round(np.sqrt(M)))
    half = int(np.log2(side))
    scale = np.sqrt(2.0 * (M - 1) / 3.0)
    idx = np.arange(M)
    lvl_i = np.array([_inverse_gray(int(v)) for v in idx >> half])
    lvl_q = np.array([_inverse_gray(int(v)) for v in idx & (side - 1)])
    pts = ((2 * lvl_i - (side - 1)) + 1j * (2 * lvl_q - (side - 1))) / scale
    pts.setflags(write=False)
    return QamConstellation(M, pts, (side - 1) / scale)


def nearest(y, c: QamConstellation):
    """Nearest constellation point and its index; ties go to the smaller index."""
    y = np.asarray(y)
    d = np.abs(y[..., None] - c.points) ** 2
    idx = np.argmin(d, axis=-1)
    return c.points[idx], idx


def _smallest_four(sample, c):
    if c.order < 4:
        raise InvalidArgumentError("llr needs a constellation with at least 4 points")
    d = np.abs(np.asarray(sample)[..., None] - c.points) ** 2
    return np.sort(np.partition(d, 3, axis=-1)[..., :4], axis=-1)


def llr(sample, c: QamConstellation, p: LlrParams):
    """Reliability of a hard decision from the four nearest squared distances.

    ``ln( exp(-d1/2s) / sum_{i=2..4} exp(-di/2s) )`` evaluated in the log
    domain; works elementwise on arrays.
    """
    d = _smallest_four(sample, c) / (2.0 * p.noise_var)
    rest = -d[..., 1:]
    top = rest.max(axis=-1)
    lse = top + np.log(np.exp(rest - top[..., None]).sum(axis=-1))
    out = -d[..., 0] - lse
    return out if np.ndim(out) else float(out)


def augment(Y):
    """``[Y, -Y, iY, -iY]`` along the column axis."""
    Y = np.asarray(Y)
    return np.concatenate([Y, -Y, 1j * Y, -1j * Y], axis=-1)


def corner_pilot(c: QamConstellation, N_s: int) -> np.ndarray:
    """Pilot block ``p_t I``; column ``s`` is stream ``s``'s pilot resource element."""
    if N_s < 1:
        raise InvalidArgumentError("N_s must be >= 1")
    return c.corner * np.eye(N_s, dtype=complex)


def bits_to_indices(bits, c: QamConstellation):
    """Group bits (last axis, MSB first) into symbol indices."""
    bits = np.asarray(bits, dtype=np.int64)
    b = c.bits_per_symbol
    if bits.shape[-1] % b:
        raise InvalidArgumentError(f"bit count not a multiple of {b}")
    grouped = bits.reshape(*bits.shape[:-1], -1, b)
    weights = 1 << np.arange(b - 1, -1, -1)
    return grouped @ weights


def indices_to_bits(indices, c: QamConstellation):
    indices = np.asarray(indices, dtype=np.int64)
    b = c.bits_per_symbol
    shifts = np.arange(b - 1, -1, -1)
    bits = (indices[..., None] >> shifts) & 1
    return bits.reshape(*indices.shape[:-1], -1) if indices.ndim else bits


def modulate(bits, c: QamConstellation):
    return c.points[bits_to_indices(bits, c)]


def demodulate(y, c: QamConstellation):
    """Hard-decision bits of the nearest points."""
    _, idx = nearest(y, c)
    return indices_to_bits(idx, c)

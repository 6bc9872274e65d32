"""Geometric frequency-selective MIMO channel.

Arrays are plain numpy:

* delay-tap channel: ``(N_c, N_r, N_t)`` complex
* frequency channel: ``(J, N_r, N_t)`` complex
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentError
from .seeding import rng as _rng


@dataclass(frozen=True)
class PathComponent:
    gain: complex
    delay: float
    aoa_elevation: float
    aoa_azimuth: float
    aod_elevation: float
    aod_azimuth: float


@dataclass(frozen=True)
class ChannelParams:
    """Parameters of the geometric channel.

    ``max_delay`` bounds the path delays; ``None`` means ``(N_c - 1) * T_s``.
    """

    num_paths: int = 4
    num_taps: int = 2
    sample_period: float = 1.0
    path_loss: float = 1.0
    rolloff: float = 0.3
    tx_array: Tuple[int, int] = (8, 8)
    rx_array: Tuple[int, int] = (2, 4)
    element_spacing: float = 0.5
    max_delay: Optional[float] = None

    def __post_init__(self):
        if self.num_paths < 1 or self.num_taps < 1:
            raise InvalidArgumentError("num_paths and num_taps must be >= 1")
        if self.sample_period <= 0:
            raise InvalidArgumentError("sample_period must be positive")
        if not 0.0 <= self.rolloff <= 1.0:
            raise InvalidArgumentError("rolloff must lie in [0, 1]")
        if self.path_loss <= 0:
            raise InvalidArgumentError("path_loss must be positive")
        for arr in (self.tx_array, self.rx_array):
            if len(arr) != 2 or arr[0] < 1 or arr[1] < 1:
                raise InvalidArgumentError(f"invalid array shape {arr}")
        if self.max_delay is not None and self.max_delay < 0:
            raise InvalidArgumentError("max_delay must be non-negative")

    @property
    def num_tx(self) -> int:
        return self.tx_array[0] * self.tx_array[1]

    @property
    def num_rx(self) -> int:
        return self.rx_array[0] * self.rx_array[1]

    @property
    def delay_bound(self) -> float:
        if self.max_delay is not None:
            return self.max_delay
        return (self.num_taps - 1) * self.sample_period


def steering_vector(array, elevation, azimuth, spacing=0.5):
    """UPA steering vector.

    Element ``(m, n)`` (row-major flattening) carries the phase
    ``2*pi*spacing*(m*u + n*v)`` with ``u = sin(el) cos(az)`` and
    ``v = sin(el) sin(az)``; the vector is scaled to unit norm.
    """
    rows, cols = int(array[0]), int(array[1])
    if rows < 1 or cols < 1:
        raise InvalidArgumentError(f"array must have at least one element, got {array}")
    u = np.sin(elevation) * np.cos(azimuth)
    v = np.sin(elevation) * np.sin(azimuth)
    m = np.arange(rows)[:, None]
    n = np.arange(cols)[None, :]
    phase = 2.0 * np.pi * spacing * (m * u + n * v)
    return (np.exp(1j * phase) / np.sqrt(rows * cols)).ravel()


def raised_cosine(t, sample_period, rolloff):
    """Raised-cosine pulse ``p_rc(t)`` with unit peak.

    Works elementwise on arrays. At ``|t| = T_s / (2 beta)`` the analytic
    limit ``(pi/4) sinc(1/(2 beta))`` replaces the 0/0 form.
    """
    t = np.asarray(t, dtype=float)
    x = t / sample_period
    base = np.sinc(x)
    if rolloff == 0.0:
        return base
    denom = 1.0 - (2.0 * rolloff * x) ** 2
    singular = np.isclose(denom, 0.0, atol=1e-12)
    safe = np.where(singular, 1.0, denom)
    out = base * np.cos(np.pi * rolloff * x) / safe
    if singular.any():  # 1 / (2 beta) overflows for tiny rolloffs, which are never singular
        out = np.where(singular, (np.pi / 4.0) * np.sinc(1.0 / (2.0 * rolloff)), out)
    return out if out.ndim else float(out)


def draw_paths(params: ChannelParams, seed) -> List[PathComponent]:
    """Draw path parameters: CN(0,1) gains, uniform delays and angles."""
    g = _rng(seed)
    L = params.num_paths
    gains = (g.standard_normal(L) + 1j * g.standard_normal(L)) / np.sqrt(2.0)
    delays = g.uniform(0.0, params.delay_bound, L) if params.delay_bound > 0 else np.zeros(L)
    angles = g.uniform(0.0, 2.0 * np.pi, (L, 4))
    return [
        PathComponent(complex(gains[l]), float(delays[l]), *map(float, angles[l]))
        for l in range(L)
    ]


def taps_from_paths(params: ChannelParams, paths: Sequence[PathComponent]) -> np.ndarray:
    """Evaluate the delay taps of the geometric model for explicit paths."""
    L = len(paths)
    if L == 0:
        raise InvalidArgumentError("at least one path is required")
    d = np.arange(params.num_taps)
    gains = np.array([p.gain for p in paths])
    delays = np.array([p.delay for p in paths])
    pulse = raised_cosine(d[:, None] * params.sample_period - delays[None, :],
                          params.sample_period, params.rolloff)
    coef = pulse * gains[None, :]
    a_r = np.stack([steering_vector(params.rx_array, p.aoa_elevation, p.aoa_azimuth,
                                    params.element_spacing) for p in paths])
    a_t = np.stack([steering_vector(params.tx_array, p.aod_elevation, p.aod_azimuth,
                                    params.element_spacing) for p in paths])
    scale = np.sqrt(params.num_tx * params.num_rx / (L * params.path_loss))
    return scale * np.einsum("dl,lr,lt->drt", coef, a_r, a_t.conj())


def gen_channel(params: ChannelParams, seed) -> np.ndarray:
    """Delay taps ``(N_c, N_r, N_t)`` of one user's channel, deterministic in ``seed``."""
    return taps_from_paths(params, draw_paths(params, seed))


def dft_matrix(num_subcarriers: int, num_taps: int) -> np.ndarray:
    j = np.arange(num_subcarriers)[:, None]
    d = np.arange(num_taps)[None, :]
    return np.exp(-2j * np.pi * j * d / num_subcarriers)


def to_frequency(taps, num_subcarriers: int) -> np.ndarray:
    """``H[j] = sum_d taps[d] exp(-i 2 pi j d / J)``, shape ``(J, N_r, N_t)``."""
    if num_subcarriers < 1:
        raise InvalidArgumentError("num_subcarriers must be >= 1")
    taps = np.asarray(taps)
    return np.einsum("jd,drt->jrt", dft_matrix(num_subcarriers, taps.shape[0]), taps)


def transmit(H_all, precoders, X_all, noise_var, seed):
    """Pass all users' precoded grids through their channels and add AWGN.

    Parameters
    ----------
    H_all : array ``(K, J, N_r, N_t)``
        Frequency-domain channel of every user.
    precoders : PrecoderSet
    X_all : array ``(K, J, N_s, T)``
        Symbol grid of every user.
    noise_var : float or array ``(K,)``
        Per-antenna noise variance at each user.
    seed : int

    Returns
    -------
    array ``(K, J, N_r, T)``
        Antenna-domain received grids before combining.
    """
    H_all = np.asarray(H_all)
    X_all = np.asarray(X_all)
    if H_all.ndim != 4 or X_all.ndim != 4:
        raise DimensionMismatchError("H_all must be (K,J,Nr,Nt) and X_all (K,J,Ns,T)")
    K, J, N_r, N_t = H_all.shape
    if X_all.shape[0] != K or X_all.shape[1] != J:
        raise DimensionMismatchError(f"X_all {X_all.shape} does not match H_all {H_all.shape}")
    F = precoders.user_precoders()  # (K, N_t, N_s)
    if F.shape[0] != K or F.shape[1] != N_t or F.shape[2] != X_all.shape[2]:
        raise DimensionMismatchError(f"precoder {F.shape} does not match channel/symbols")
    noise_var = np.broadcast_to(np.asarray(noise_var, dtype=float), (K,))
    if np.any(noise_var < 0):
        raise InvalidArgumentError("noise_var must be non-negative")

    tx = np.einsum("kts,kjsn->jtn", F, X_all)  # antenna-domain transmit grid
    rx = np.einsum("kjrt,jtn->kjrn", H_all, tx)
    g = _rng(seed)
    T = X_all.shape[3]
    noise = (g.standard_normal((K, J, N_r, T)) + 1j * g.standard_normal((K, J, N_r, T)))
    rx = rx + noise * np.sqrt(noise_var / 2.0)[:, None, None, None]
    return rx

"""Pilot-based channel estimation baselines and overhead accounting.

Two pilot layouts on a ``J x T`` grid:

* ``orthogonal``: every stream of every user owns one resource element per
  resource block; all other streams are silent there.
* ``non_orthogonal``: the first few OFDM symbols form a comb shared by all
  users; stream ``s`` of every user sits on subcarriers ``j = s (mod N_s)``,
  so pilots of different users collide.
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Tuple

import numpy as np

from .errors import (
    CapacityExceededError,
    EstimationImpossibleError,
    InvalidArgumentError,
)

ORTHOGONAL = "orthogonal"
NON_ORTHOGONAL = "non_orthogonal"
NON_ORTHOGONAL_FRACTION = 0.17


@dataclass(frozen=True)
class PilotPattern:
    kind: str
    num_users: int
    num_streams: int
    num_subcarriers: int
    num_symbols: int
    pilot_res: Dict[Tuple[int, int], Tuple[Tuple[int, int], ...]]
    mask: np.ndarray  # (J, T) True on every pilot resource element

    @property
    def overhead(self) -> Fraction:
        return Fraction(int(self.mask.sum()), self.num_subcarriers * self.num_symbols)

    @property
    def overhead_fraction(self) -> float:
        return float(self.overhead)

    def pilot_grid(self, user, value):
        """Transmit grid ``(J, N_s, T)`` of ``user`` holding only its pilots."""
        X = np.zeros((self.num_subcarriers, self.num_streams, self.num_symbols), dtype=complex)
        for s in range(self.num_streams):
            for j, t in self.pilot_res[(user, s)]:
                X[j, s, t] = value
        return X


def make_pattern(kind, K, N_s, J, T, rb_size=None, fraction=NON_ORTHOGONAL_FRACTION) -> PilotPattern:
    """Build a pilot layout.

    Parameters
    ----------
    kind : ``"orthogonal"`` or ``"non_orthogonal"``
    K, N_s, J, T : users, streams per user, subcarriers, OFDM symbols
    rb_size : subcarriers per resource block for the orthogonal layout
        (default: the whole band is one block)
    fraction : target share of the grid for the non-orthogonal comb
    """
    if min(K, N_s, J, T) < 1:
        raise InvalidArgumentError("K, N_s, J and T must be positive")
    res: Dict[Tuple[int, int], list] = {(k, s): [] for k in range(K) for s in range(N_s)}
    mask = np.zeros((J, T), dtype=bool)
    if kind == ORTHOGONAL:
        rb = J if rb_size is None else int(rb_size)
        if rb < 1 or J % rb:
            raise InvalidArgumentError(f"rb_size={rb} must divide J={J}")
        if K * N_s > rb * T:
            raise CapacityExceededError(
                f"{K * N_s} streams do not fit in a {rb}x{T} resource block")
        for b in range(J // rb):
            for g in range(K * N_s):
                j, t = b * rb + g % rb, g // rb
                res[(g // N_s, g % N_s)].append((j, t))
                mask[j, t] = True
    elif kind == NON_ORTHOGONAL:
        if N_s > J:
            raise CapacityExceededError(f"{N_s} streams cannot share a comb of {J} subcarriers")
        n_sym = min(T, max(1, int(round(fraction * T))))
        mask[:, :n_sym] = True
        for k in range(K):
            for s in range(N_s):
                res[(k, s)] = [(j, t) for t in range(n_sym) for j in range(s, J, N_s)]
    else:
        raise InvalidArgumentError(f"unknown pilot pattern kind {kind!r}")
    frozen = {key: tuple(v) for key, v in res.items()}
    mask.setflags(write=False)
    return PilotPattern(kind, K, N_s, J, T, frozen, mask)


def _interp_linear(j_p, h_p, J):
    j = np.arange(J)
    out = np.empty((J,) + h_p.shape[1:], dtype=complex)
    flat = h_p.reshape(len(j_p), -1)
    res = out.reshape(J, -1)
    for q in range(flat.shape[1]):
        res[:, q] = np.interp(j, j_p, flat[:, q].real) + 1j * np.interp(j, j_p, flat[:, q].imag)
    return out


def _interp_delay(j_p, h_p, J, num_taps):
    """Least-squares fit of a ``num_taps``-tap delay profile through the pilots."""
    if num_taps > len(j_p):
        raise EstimationImpossibleError(
            f"{len(j_p)} pilot subcarriers cannot resolve {num_taps} taps")
    F = np.exp(-2j * np.pi * np.outer(np.arange(J), np.arange(num_taps)) / J)
    flat = h_p.reshape(len(j_p), -1)
    taps = np.linalg.lstsq(F[list(j_p)], flat, rcond=None)[0]
    return (F @ taps).reshape((J,) + h_p.shape[1:])


def pilot_ce(Y, pattern: PilotPattern, user, value, interpolation="linear", num_taps=None):
    """Pilot-based estimate of a user's equivalent channel on every subcarrier.

    Column ``s`` of ``H[j]`` is the LS estimate ``y / value`` averaged over
    the stream's pilots on subcarrier ``j``, then interpolated across
    frequency: piecewise-linear (constant beyond the outermost pilots) or,
    with ``interpolation="delay"``, a ``num_taps``-tap delay-domain fit.

    Parameters
    ----------
    Y : ``(J, N_s, T)`` combiner output of ``user``
    """
    Y = np.asarray(Y)
    J, N_s, _ = Y.shape
    H = np.empty((J, N_s, N_s), dtype=complex)
    for s in range(N_s):
        res = pattern.pilot_res[(user, s)]
        if not res:
            raise EstimationImpossibleError(f"stream {s} of user {user} has no pilots")
        by_j: Dict[int, list] = {}
        for j, t in res:
            by_j.setdefault(j, []).append(Y[j, :, t] / value)
        j_p = np.array(sorted(by_j))
        h_p = np.stack([np.mean(by_j[j], axis=0) for j in j_p])  # (P, N_s)
        if interpolation == "linear":
            H[:, :, s] = _interp_linear(j_p, h_p, J)
        elif interpolation == "delay":
            if num_taps is None:
                raise InvalidArgumentError("delay interpolation needs num_taps")
            H[:, :, s] = _interp_delay(j_p, h_p, J, int(num_taps))
        else:
            raise InvalidArgumentError(f"unknown interpolation {interpolation!r}")
    return H


def theoretical_gain(overhead_baseline, overhead_proposed) -> float:
    """Throughput ratio implied by pilot overheads alone, minus one."""
    for o in (overhead_baseline, overhead_proposed):
        if not 0 <= o < 1:
            raise InvalidArgumentError("overheads must lie in [0, 1)")
    return (1 - overhead_proposed) / (1 - overhead_baseline) - 1

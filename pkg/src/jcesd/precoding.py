"""Sub-connected hybrid precoder/combiner and frequency-flat EZF digital precoder."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import DimensionMismatchError, IllConditionedPrecoderError, InvalidArgumentError
from .seeding import rng as _rng, sub_seed

# V^H V with a condition number above this is treated as singular.
MAX_GRAM_CONDITION = 1e12


@dataclass(frozen=True)
class PrecoderSet:
    """Hybrid precoding chain for one TTI.

    Attributes
    ----------
    F_RF : ``(N_t, N_t^RF)`` block-diagonal analog precoder
    W_RF : ``(N_r, N_r^RF)`` analog combiner, shared by every user
    W_BB : ``(N_r^RF, N_s)`` digital combiner, shared by every user
    F_BB : ``(K, N_t^RF, N_s)`` frequency-flat digital precoders
    power_factor : lambda scaling the digital precoder to total power P
    """

    F_RF: np.ndarray
    W_RF: np.ndarray
    W_BB: np.ndarray
    F_BB: np.ndarray
    power_factor: float

    @property
    def num_users(self) -> int:
        return self.F_BB.shape[0]

    @property
    def num_streams(self) -> int:
        return self.W_BB.shape[1]

    def user_precoders(self) -> np.ndarray:
        """``lambda F_RF F_BB,k`` for every user, shape ``(K, N_t, N_s)``."""
        return self.power_factor * np.einsum("ta,kas->kts", self.F_RF, self.F_BB)

    def combiner(self) -> np.ndarray:
        """``W_RF W_BB``, shape ``(N_r, N_s)``."""
        return self.W_RF @ self.W_BB


def build_analog(N_t, N_t_rf, N_r, N_r_rf, seed) -> Tuple[np.ndarray, np.ndarray]:
    """Random-phase sub-connected analog precoder and fully-connected combiner."""
    if N_t_rf < 1 or N_t % N_t_rf:
        raise InvalidArgumentError(f"N_t={N_t} is not divisible by N_t^RF={N_t_rf}")
    if N_r_rf < 1 or N_r < 1:
        raise InvalidArgumentError("N_r and N_r^RF must be >= 1")
    g = _rng(seed)
    block = N_t // N_t_rf
    theta = g.uniform(0.0, 2.0 * np.pi, (N_t_rf, block))
    F_RF = np.zeros((N_t, N_t_rf), dtype=complex)
    for m in range(N_t_rf):
        F_RF[m * block:(m + 1) * block, m] = np.exp(1j * theta[m]) / np.sqrt(block)
    W_RF = np.exp(1j * g.uniform(0.0, 2.0 * np.pi, (N_r, N_r_rf))) / np.sqrt(N_r)
    return F_RF, W_RF


def build_digital_combiner(N_r_rf, N_s, seed) -> np.ndarray:
    """DFT-form digital combiner ``exp(i Theta) / sqrt(N_r^RF N_s)``."""
    if N_r_rf < 1 or N_s < 1:
        raise InvalidArgumentError("sizes must be >= 1")
    theta = _rng(seed).uniform(0.0, 2.0 * np.pi, (N_r_rf, N_s))
    return np.exp(1j * theta) / np.sqrt(N_r_rf * N_s)


def equivalent_rf_channel(H, F_RF, W_RF) -> np.ndarray:
    """``W_RF^H H[j] F_RF`` for every subcarrier; ``H`` is ``(..., N_r, N_t)``."""
    H = np.asarray(H)
    if H.shape[-2] != W_RF.shape[0] or H.shape[-1] != F_RF.shape[0]:
        raise DimensionMismatchError(
            f"H {H.shape[-2:]} vs W_RF {W_RF.shape} / F_RF {F_RF.shape}")
    return W_RF.conj().T @ H @ F_RF


def _canonical_phase(V):
    """Rotate each column so that its first non-negligible entry is real positive."""
    V = V.copy()
    for c in range(V.shape[1]):
        col = V[:, c]
        idx = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if idx.size:
            V[:, c] = col * np.exp(-1j * np.angle(col[idx[0]]))
    return V


def mean_gram(H_tilde_k, W_BB) -> np.ndarray:
    """Average over subcarriers of ``(W_BB^H H~[j])^H (W_BB^H H~[j])``."""
    A = W_BB.conj().T @ H_tilde_k  # (J, N_s, N_t^RF)
    return np.einsum("jsa,jsb->ab", A.conj(), A) / A.shape[0]


def top_eigenvectors(G, n):
    """Leading ``n`` eigenvectors of a Hermitian PSD matrix, descending, canonical phase."""
    w, V = np.linalg.eigh(G)
    order = np.argsort(-w, kind="stable")[:n]
    return _canonical_phase(V[:, order])


def ezf_precoder(H_tilde, W_BB, N_s, total_power=None):
    """Joint-transceiver frequency-flat EZF precoder.

    Parameters
    ----------
    H_tilde : array ``(K, J, N_r^RF, N_t^RF)``
    W_BB : array ``(N_r^RF, N_s)``
    N_s : int
    total_power : float, default ``K * N_s``

    Returns
    -------
    F_BB : array ``(K, N_t^RF, N_s)``
    power_factor : float
    """
    H_tilde = np.asarray(H_tilde)
    K, J, n_rrf, n_trf = H_tilde.shape
    if W_BB.shape != (n_rrf, N_s):
        raise DimensionMismatchError(f"W_BB {W_BB.shape} vs ({n_rrf}, {N_s})")
    if K * N_s > n_trf:
        raise InvalidArgumentError(f"K*N_s={K * N_s} exceeds N_t^RF={n_trf}")
    P = K * N_s if total_power is None else total_power

    V = np.concatenate([top_eigenvectors(mean_gram(H_tilde[k], W_BB), N_s)
                        for k in range(K)], axis=1)
    gram = V.conj().T @ V
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > MAX_GRAM_CONDITION:
        raise IllConditionedPrecoderError(float(cond))
    F = V @ np.linalg.inv(gram)
    lam = float(np.sqrt(P / np.real(np.trace(F @ F.conj().T))))
    F_BB = F.reshape(n_trf, K, N_s).transpose(1, 0, 2)
    return np.ascontiguousarray(F_BB), lam


def build_precoders(H_all, N_t_rf, N_r_rf, N_s, seed, total_power=None) -> PrecoderSet:
    """Analog stage, shared digital combiner and EZF precoder for all users.

    ``H_all`` is ``(K, J, N_r, N_t)``.
    """
    H_all = np.asarray(H_all)
    N_r, N_t = H_all.shape[-2:]
    F_RF, W_RF = build_analog(N_t, N_t_rf, N_r, N_r_rf, sub_seed(seed, "analog"))
    W_BB = build_digital_combiner(N_r_rf, N_s, sub_seed(seed, "digital-combiner"))
    H_tilde = equivalent_rf_channel(H_all, F_RF, W_RF)
    F_BB, lam = ezf_precoder(H_tilde, W_BB, N_s, total_power)
    return PrecoderSet(F_RF, W_RF, W_BB, F_BB, lam)


def effective_channel(H, precoders: PrecoderSet, user: int) -> np.ndarray:
    """``lambda W_BB^H W_RF^H H[j] F_RF F_BB,k`` for every subcarrier, ``(J, N_s, N_s)``."""
    H = np.asarray(H)
    if H.shape[-2] != precoders.W_RF.shape[0] or H.shape[-1] != precoders.F_RF.shape[0]:
        raise DimensionMismatchError(f"H {H.shape} does not match the precoder chain")
    W = precoders.combiner()
    return precoders.power_factor * (W.conj().T @ H @ precoders.F_RF @ precoders.F_BB[user])


def cross_channel(H, precoders: PrecoderSet, user: int, other: int) -> np.ndarray:
    """Leakage of ``other``'s streams into ``user``'s combiner output."""
    W = precoders.combiner()
    return precoders.power_factor * (W.conj().T @ H @ precoders.F_RF @ precoders.F_BB[other])


def combine(raw, precoders: PrecoderSet) -> np.ndarray:
    """Apply ``W_BB^H W_RF^H`` to antenna-domain grids ``(..., N_r, T)``."""
    return precoders.combiner().conj().T @ raw


def iui_ratio(H_all, precoders: PrecoderSet) -> np.ndarray:
    """Residual IUI power over desired power per user, averaged over subcarriers."""
    K = H_all.shape[0]
    out = np.empty(K)
    for k in range(K):
        desired = np.sum(np.abs(effective_channel(H_all[k], precoders, k)) ** 2)
        leak = sum(np.sum(np.abs(cross_channel(H_all[k], precoders, k, m)) ** 2)
                   for m in range(K) if m != k)
        out[k] = leak / desired
    return out

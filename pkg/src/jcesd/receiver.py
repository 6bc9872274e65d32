"""Semi-blind joint channel estimation and detection.

Conventions: every per-subcarrier grid is ``Y[j] ~ H[j] X[j]`` with the
``N_s`` streams as rows and OFDM symbols as columns.  Each frequency block
carries ``N_s`` corner pilots on its center subcarrier, on OFDM symbols
``0 .. N_s-1``; pilot ``r`` is sent by stream ``r`` alone.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .convergence import init_bound_check, marcum_q, random_init_exceedance  # noqa: F401
from .errors import (
    AmbiguityError,
    BlockFailure,
    DegenerateStreamError,
    DetectionFailureError,
    DimensionMismatchError,
    EstimationImpossibleError,
    InsufficientSamplesError,
    InvalidArgumentError,
    JcesdError,
    SingularMatrixError,
)
from .modem import LlrParams, QamConstellation, augment, corner_pilot, llr, nearest
from .optimizer import (
    FittingProblem,
    channel_from_fit,
    real_embed,
    real_stack,
    solve,
)

SINR_CAP = 1e12
ROTATIONS = (1.0 + 0j, -1.0 + 0j, 1j, -1j)


def normalize(y, a):
    """Scale a stream so its largest modulus equals ``a``.

    Returns
    -------
    (ndarray, float)
        The scaled stream and the factor ``a / max|y|`` that was applied.
    """
    y = np.asarray(y)
    peak = np.abs(y).max() if y.size else 0.0
    if not peak > 0:
        raise DegenerateStreamError("stream is identically zero")
    scale = a / peak
    return y * scale, float(scale)


def ls_init(P_r, P_t):
    """Least-squares channel from pilots, ``P_r P_t^H (P_t P_t^H)^{-1}``."""
    P_r = np.atleast_2d(np.asarray(P_r, dtype=complex))
    P_t = np.atleast_2d(np.asarray(P_t, dtype=complex))
    if P_r.shape[1] != P_t.shape[1]:
        raise DimensionMismatchError("P_r and P_t must have the same number of columns")
    gram = P_t @ P_t.conj().T
    if np.linalg.cond(gram) > 1e12:
        raise SingularMatrixError("singular pilot matrix")
    return np.linalg.solve(gram.T, (P_r @ P_t.conj().T).T).T


def estimate_sinr(P_r, P_t, H_hat):
    """``||P_t||_F^2 / ||H_hat^{-1} P_r - P_t||_F^2``, capped at ``SINR_CAP``."""
    P_r = np.atleast_2d(np.asarray(P_r, dtype=complex))
    P_t = np.atleast_2d(np.asarray(P_t, dtype=complex))
    H_hat = np.atleast_2d(np.asarray(H_hat, dtype=complex))
    if np.linalg.cond(H_hat) > 1e12:
        raise SingularMatrixError("singular channel estimate")
    err = np.linalg.norm(np.linalg.solve(H_hat, P_r) - P_t) ** 2
    sig = np.linalg.norm(P_t) ** 2
    if err <= sig / SINR_CAP:
        return SINR_CAP
    return float(sig / err)


def feasible_start(U0, samples, bound, max_halvings=2100):
    """Halve ``U0`` until ``||U0 samples||_inf <= bound``."""
    U = np.asarray(U0, dtype=float)
    samples = np.asarray(samples, dtype=float)
    for _ in range(max_halvings):
        if np.abs(U @ samples).max(initial=0.0) <= bound:
            return U
        U = U / 2
    return U


# --------------------------------------------------------------------------
# grid layout


@dataclass(frozen=True)
class BlockPartition:
    num_subcarriers: int
    num_blocks: int

    def __post_init__(self):
        if self.num_blocks < 1 or self.num_subcarriers % self.num_blocks:
            raise InvalidArgumentError(
                f"N_f={self.num_blocks} must divide J={self.num_subcarriers}")

    @property
    def block_width(self) -> int:
        return self.num_subcarriers // self.num_blocks

    def symbols_per_block(self, T) -> int:
        return self.block_width * T

    def block(self, i) -> slice:
        w = self.block_width
        return slice(i * w, (i + 1) * w)

    def block_of(self, j) -> int:
        return j // self.block_width


@dataclass(frozen=True)
class PilotLayout:
    """Corner pilots of one user: ``subcarriers[i]`` hosts block ``i``'s pilots."""

    partition: BlockPartition
    num_streams: int
    value: complex
    subcarriers: Tuple[int, ...]

    @property
    def symbols(self) -> range:
        return range(self.num_streams)

    def mask(self, T) -> np.ndarray:
        """Boolean ``(J, T)`` map of pilot resource elements."""
        m = np.zeros((self.partition.num_subcarriers, T), dtype=bool)
        m[list(self.subcarriers), :self.num_streams] = True
        return m

    @property
    def block_pilot(self) -> np.ndarray:
        return corner_pilot_value(self.value, self.num_streams)

    def overhead_fraction(self, T) -> float:
        """Share of a stream's ``J x T`` resource elements spent on pilots."""
        return self.num_streams * len(self.subcarriers) / (self.partition.num_subcarriers * T)


def corner_pilot_value(value, N_s):
    return value * np.eye(N_s, dtype=complex)


def make_pilot_layout(partition: BlockPartition, N_s: int, T: int,
                      c: QamConstellation) -> PilotLayout:
    if T < N_s:
        raise InvalidArgumentError(f"T={T} leaves no room for {N_s} pilots")
    w = partition.block_width
    subs = tuple(i * w + w // 2 for i in range(partition.num_blocks))
    return PilotLayout(partition, N_s, c.corner, subs)


def embed_pilots(X, layout: PilotLayout):
    """Overwrite the pilot resource elements of ``X (J, N_s, T)`` in place-safe copy."""
    X = np.array(X, dtype=complex, copy=True)
    P = layout.block_pilot
    for j in layout.subcarriers:
        X[j, :, :layout.num_streams] = P
    return X


@dataclass
class ReceivedGrid:
    """Combiner output of one user, ``Y (J, N_s, T)``, with its pilot layout."""

    Y: np.ndarray
    pilots: PilotLayout
    scale: np.ndarray = None

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=complex)
        J, N_s, _ = self.Y.shape
        if J != self.pilots.partition.num_subcarriers or N_s != self.pilots.num_streams:
            raise DimensionMismatchError(f"grid {self.Y.shape} does not match pilot layout")
        if self.scale is None:
            self.scale = np.ones(N_s)

    @property
    def num_symbols(self) -> int:
        return self.Y.shape[2]

    def received_pilots(self, i) -> np.ndarray:
        return self.Y[self.pilots.subcarriers[i], :, :self.pilots.num_streams]


# --------------------------------------------------------------------------
# per-block fitting


@dataclass
class AmbiguityLog:
    """Position ``r`` of the corrected output holds original stream
    ``permutation[r]`` multiplied by ``rotation[r]``."""

    permutation: Tuple[int, ...]
    rotation: Tuple[complex, ...]

    @property
    def is_identity(self) -> bool:
        return self.permutation == tuple(range(len(self.permutation))) and \
            all(r == 1 for r in self.rotation)


def resolve_ambiguity(X, H, pilot_cols, p_t):
    """Undo stream permutation and ``{1, -1, i, -i}`` rotations with the pilots.

    Stream ``s`` is moved to the pilot position where its detected pilot is
    largest and rotated so that pilot lands in the quadrant of ``p_t``.
    ``H`` columns receive the inverse transform, so ``H @ X`` is unchanged.
    """
    X = np.asarray(X)
    H = np.asarray(H)
    N_s = X.shape[0]
    pilot_cols = list(pilot_cols)
    P = X[:, pilot_cols]
    target = np.argmax(np.abs(P), axis=1)
    if len(set(target.tolist())) != N_s:
        raise AmbiguityError(f"streams claim pilot positions {target.tolist()}")
    perm = [0] * N_s
    rot = [1.0 + 0j] * N_s
    X_new = np.empty_like(X, dtype=complex)
    H_new = np.empty_like(H, dtype=complex)
    ref = np.conj(p_t)
    for s in range(N_s):
        r = int(target[s])
        p_r = P[s, r]
        c = max(ROTATIONS, key=lambda q: (q * p_r * ref).real)
        perm[r] = s
        rot[r] = c
        X_new[r] = c * X[s]
        H_new[..., r] = H[..., s] / c
    return X_new, H_new, AmbiguityLog(tuple(perm), tuple(rot))


@dataclass
class BlockResult:
    H: Optional[np.ndarray]
    X: Optional[np.ndarray]
    X_soft: Optional[np.ndarray] = field(default=None, repr=False)
    failed: bool = False
    reason: str = ""
    iterations: int = 0
    condition: float = float("nan")
    ambiguity: Optional[AmbiguityLog] = None
    status: str = ""


def semiblind_block(Y_block, pilot_cols, c: QamConstellation, kappa_max=1e4, sinr=None,
                    use_augmentation=True, a=None, **solver_opts) -> BlockResult:
    """Fit one block: normalize, gate, pilot start, constellation fit, disambiguate.

    Parameters
    ----------
    Y_block : ``(N_s, m)`` received symbols of the block (pilots included)
    pilot_cols : column indices of the ``N_s`` pilots, pilot ``r`` first-stream-``r``
    c : constellation of the data symbols
    kappa_max : condition-number gate on the (augmented) normalized samples
    sinr : linear SINR for the box margin; estimated from the block's own
        pilots when omitted
    use_augmentation : append ``-Y, iY, -iY`` to the fitting samples
    a : normalization target, default ``sqrt(2) * lambda_M``

    Returns
    -------
    BlockResult
        ``H`` is the de-normalized block channel and ``X`` the hard
        decisions with the known pilots written back; ``failed`` is set
        when the condition gate fires.
    """
    Y_block = np.asarray(Y_block, dtype=complex)
    N_s = Y_block.shape[0]
    pilot_cols = list(pilot_cols)
    if len(pilot_cols) != N_s:
        raise InvalidArgumentError(f"need {N_s} pilot columns, got {len(pilot_cols)}")
    a = np.sqrt(2.0) * c.boundary if a is None else a
    scales = np.empty(N_s)
    Yn = np.empty_like(Y_block)
    for s in range(N_s):
        Yn[s], scales[s] = normalize(Y_block[s], a)

    samples = augment(Yn) if use_augmentation else Yn
    if samples.shape[1] < 2 * N_s:
        raise InsufficientSamplesError("block has too few columns to fit")
    sv = np.linalg.svd(samples, compute_uv=False)
    kappa = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if kappa > kappa_max:
        return BlockResult(None, None, failed=True, condition=kappa,
                           reason=f"condition number {kappa:.3g} exceeds {kappa_max:.3g}")

    P_t = corner_pilot(c, N_s)
    P_r = Yn[:, pilot_cols]
    H0 = ls_init(P_r, P_t)
    if sinr is None:
        sinr = estimate_sinr(P_r, P_t, H0)
    bound = c.boundary + np.sqrt(1.0 / sinr)

    S = real_stack(samples)
    U0 = feasible_start(real_embed(np.linalg.inv(H0)), S, bound)
    sol = solve(FittingProblem(S, bound, N_s, **solver_opts), U0)
    Hn = channel_from_fit(sol.U)
    X_soft = np.linalg.solve(Hn, Yn)

    X_soft, Hn, log = resolve_ambiguity(X_soft, Hn, pilot_cols, c.corner)
    X_hat, _ = nearest(X_soft, c)
    X_hat[:, pilot_cols] = P_t
    H = Hn / scales[:, None]
    return BlockResult(H, X_hat, X_soft, iterations=sol.iterations, condition=kappa,
                       ambiguity=log, status=sol.status)


# --------------------------------------------------------------------------
# iterative refinement


def llr_filter(X_soft, Y, c: QamConstellation, noise_var, threshold, keep=None, X_hard=None):
    """Keep the columns whose every entry has ``llr >= threshold``.

    Returns the hard decisions and received columns of the retained set and
    the boolean column mask.  ``keep`` forces columns (known pilots) in;
    ``X_hard`` supplies the decisions to return, default nearest points.
    """
    X_soft = np.atleast_2d(np.asarray(X_soft))
    Y = np.atleast_2d(np.asarray(Y))
    if threshold == -np.inf:
        mask = np.ones(X_soft.shape[1], dtype=bool)
    else:
        vals = np.atleast_2d(llr(X_soft, c, LlrParams(noise_var)))
        mask = np.all(vals >= threshold, axis=0)
    if keep is not None:
        mask = mask | np.asarray(keep, dtype=bool)
    if not mask.any():
        raise InsufficientSamplesError("every column fell below the llr threshold")
    X_hat = nearest(X_soft, c)[0] if X_hard is None else np.atleast_2d(X_hard)
    return X_hat[:, mask], Y[:, mask], mask


def ls_refine(X_hat, Y):
    """Per-subcarrier LS channel ``Y X^H (X X^H)^{-1}`` from decided symbols."""
    X_hat = np.atleast_2d(np.asarray(X_hat, dtype=complex))
    Y = np.atleast_2d(np.asarray(Y, dtype=complex))
    N_s = X_hat.shape[0]
    if X_hat.shape[1] < N_s:
        raise InsufficientSamplesError(f"{X_hat.shape[1]} columns cannot pin {N_s} streams")
    gram = X_hat @ X_hat.conj().T
    if np.linalg.cond(gram) > 1e10:
        raise InsufficientSamplesError("retained symbols are rank deficient")
    return np.linalg.solve(gram.T, (Y @ X_hat.conj().T).T).T


def lmmse_detect(H_hat, Y, noise_var):
    """Bias-normalized LMMSE estimate ``diag(G H)^{-1} G Y``.

    ``G = H^H (H H^H + noise_var I)^{-1}``.  Returns soft symbols.
    """
    H_hat = np.atleast_2d(np.asarray(H_hat, dtype=complex))
    if noise_var < 0:
        raise InvalidArgumentError("noise_var must be non-negative")
    n = H_hat.shape[0]
    A = H_hat @ H_hat.conj().T + noise_var * np.eye(n)
    try:
        G = np.linalg.solve(A.T, H_hat.conj()).T  # H^H A^{-1}
    except np.linalg.LinAlgError as exc:
        raise DetectionFailureError("singular LMMSE system") from exc
    bias = np.diag(G @ H_hat)
    if np.any(np.abs(bias) < 1e-14):
        raise DetectionFailureError("a stream has zero LMMSE gain")
    return (G @ np.asarray(Y)) / bias[:, None]


# --------------------------------------------------------------------------
# full pipeline


@dataclass
class ReceiverConfig:
    num_blocks: int = 8
    num_iterations: int = 5
    llr_threshold: float = 15.0
    kappa_max: float = 1e4
    use_augmentation: bool = True
    strict: bool = False
    sinr_window: int = 1
    normalize_target: Optional[float] = None
    active_fraction: Optional[float] = 0.05
    max_iterations: int = 500


@dataclass
class EstimationResult:
    H_hat: np.ndarray
    X_hat: np.ndarray
    ambiguity_log: List[Optional[AmbiguityLog]]
    sinr_estimate: float
    iterations_used: int
    blocks_failed: int = 0
    opt_iters: int = 0
    H_history: List[np.ndarray] = field(default_factory=list, repr=False)
    failures: List[str] = field(default_factory=list, repr=False)


def _block_samples(grid: ReceivedGrid, part: BlockPartition, i):
    """Block ``i`` as ``(N_s, width*T)`` with subcarrier-major columns."""
    sl = part.block(i)
    Yb = grid.Y[sl]  # (w, N_s, T)
    T = grid.num_symbols
    flat = np.transpose(Yb, (1, 0, 2)).reshape(Yb.shape[1], -1)
    j_local = grid.pilots.subcarriers[i] - sl.start
    cols = [j_local * T + r for r in range(grid.pilots.num_streams)]
    return flat, cols


def _unflatten(Xb, width, T):
    return np.transpose(Xb.reshape(Xb.shape[0], width, T), (1, 0, 2))


def _pooled_sinr(grid, i, window, P_t):
    n = len(grid.pilots.subcarriers)
    idx = range(max(0, i - window), min(n, i + window + 1))
    P_r = np.concatenate([grid.received_pilots(q) for q in idx], axis=1)
    P_T = np.concatenate([P_t] * len(idx), axis=1)
    return estimate_sinr(P_r, P_T, ls_init(P_r, P_T))


def _pilot_statistics(grid: ReceivedGrid, H_hat, P_t):
    """Symbol-domain SINR and receive-domain residual power at the pilots."""
    sig = err = res = 0.0
    count = 0
    for i, j in enumerate(grid.pilots.subcarriers):
        P_r = grid.received_pilots(i)
        H = H_hat[j]
        err += np.linalg.norm(np.linalg.solve(H, P_r) - P_t) ** 2
        sig += np.linalg.norm(P_t) ** 2
        res += np.linalg.norm(P_r - H @ P_t) ** 2
        count += P_r.size
    sinr = SINR_CAP if err <= sig / SINR_CAP else sig / err
    return float(sinr), float(res / count)


def jcesd(grid: ReceivedGrid, c: QamConstellation, cfg: ReceiverConfig = None) -> EstimationResult:
    """Block-wise semi-blind fit followed by llr-gated LS / LMMSE refinement."""
    cfg = ReceiverConfig() if cfg is None else cfg
    part = grid.pilots.partition
    if part.num_blocks != cfg.num_blocks:
        raise InvalidArgumentError(
            f"pilot layout has {part.num_blocks} blocks, config asks for {cfg.num_blocks}")
    J, N_s, T = grid.Y.shape
    P_t = corner_pilot(c, N_s)
    w = part.block_width
    solver_opts = dict(active_fraction=cfg.active_fraction, max_iterations=cfg.max_iterations)

    blocks: List[BlockResult] = []
    for i in range(part.num_blocks):
        Yb, cols = _block_samples(grid, part, i)
        try:
            sinr = _pooled_sinr(grid, i, cfg.sinr_window, P_t)
            res = semiblind_block(Yb, cols, c, cfg.kappa_max, sinr, cfg.use_augmentation,
                                  cfg.normalize_target, **solver_opts)
        except JcesdError as exc:
            if cfg.strict:
                raise
            res = BlockResult(None, None, failed=True, reason=f"{type(exc).__name__}: {exc}")
        if res.failed and cfg.strict:
            raise BlockFailure(f"block {i}: {res.reason}")
        blocks.append(res)

    ok = [i for i, b in enumerate(blocks) if not b.failed]
    H_hat = np.empty((J, N_s, N_s), dtype=complex)
    X_soft = np.empty((J, N_s, T), dtype=complex)
    if not ok:
        P_r = np.concatenate([grid.received_pilots(i) for i in range(part.num_blocks)], axis=1)
        try:
            H_pool = ls_init(P_r, np.concatenate([P_t] * part.num_blocks, axis=1))
        except SingularMatrixError as exc:
            raise EstimationImpossibleError("every block failed and pilots are singular") from exc
        H_hat[:] = H_pool
    for i, b in enumerate(blocks):
        sl = part.block(i)
        if b.failed and ok:
            src = min(ok, key=lambda q: (abs(q - i), q))
            H_hat[sl] = blocks[src].H
        elif not b.failed:
            H_hat[sl] = b.H
    for i, b in enumerate(blocks):
        sl = part.block(i)
        if b.failed:
            for j in range(sl.start, sl.stop):
                X_soft[j] = np.linalg.solve(H_hat[j], grid.Y[j])
        else:
            X_soft[sl] = _unflatten(b.X_soft, w, T)

    pmask = grid.pilots.mask(T)
    X_hat, _ = nearest(X_soft, c)
    X_hat = embed_pilots(X_hat, grid.pilots)
    history = [H_hat.copy()]
    sinr, _ = _pilot_statistics(grid, H_hat, P_t)

    for t in range(cfg.num_iterations):
        sinr, res_var = _pilot_statistics(grid, H_hat, P_t)
        sym_var = LlrParams.from_snr(sinr).noise_var
        H_next = H_hat.copy()
        for j in range(J):
            try:
                Xr, Yr, _ = llr_filter(X_soft[j], grid.Y[j], c, sym_var, cfg.llr_threshold,
                                       keep=pmask[j], X_hard=X_hat[j])
                H_next[j] = ls_refine(Xr, Yr)
            except InsufficientSamplesError:
                pass
        H_hat = H_next
        for j in range(J):
            try:
                X_soft[j] = lmmse_detect(H_hat[j], grid.Y[j], res_var)
            except DetectionFailureError:
                pass
        X_hat, _ = nearest(X_soft, c)
        X_hat = embed_pilots(X_hat, grid.pilots)
        history.append(H_hat.copy())

    log = [b.ambiguity for b in blocks]
    return EstimationResult(
        H_hat=H_hat,
        X_hat=X_hat,
        ambiguity_log=log,
        sinr_estimate=sinr,
        iterations_used=cfg.num_iterations,
        blocks_failed=sum(b.failed for b in blocks),
        opt_iters=sum(b.iterations for b in blocks),
        H_history=history,
        failures=[b.reason for b in blocks if b.failed],
    )


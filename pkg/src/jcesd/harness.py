"""Seeded Monte-Carlo trials, CSV sweeps with resume, and the worker pool."""

import csv
import io
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .baseline import NON_ORTHOGONAL, ORTHOGONAL, make_pattern, pilot_ce
from .channel import ChannelParams, gen_channel, to_frequency, transmit
from .config import SimConfig
from .errors import InvalidArgumentError, JcesdError
from .metrics import (
    MCS_TABLE,
    McsEntry,
    MetricsRow,
    link_adapt,
    mcs_entry,
    nmse_ratio,
    throughput,
    to_db,
    uncoded,
)
from .modem import indices_to_bits, make_constellation, nearest
from .precoding import build_precoders, combine, effective_channel
from .receiver import (
    BlockPartition,
    ReceivedGrid,
    ReceiverConfig,
    embed_pilots,
    jcesd,
    lmmse_detect,
    make_pilot_layout,
)
from .seeding import rng, sub_seed

CSV_HEADER = MetricsRow.FIELDS


def channel_params(cfg: SimConfig) -> ChannelParams:
    return ChannelParams(num_paths=cfg.num_paths, num_taps=cfg.n_c, rolloff=cfg.rolloff,
                         tx_array=cfg.tx_array, rx_array=cfg.rx_array,
                         max_delay=cfg.max_delay)


def receiver_config(cfg: SimConfig) -> ReceiverConfig:
    return ReceiverConfig(num_blocks=cfg.n_f, num_iterations=cfg.n_iter,
                          llr_threshold=cfg.llr_threshold, kappa_max=cfg.kappa_max,
                          use_augmentation=cfg.augment, strict=cfg.strict_fail)


@dataclass
class Link:
    """Everything one TTI shares across receivers."""

    H_all: np.ndarray  # (K, J, N_r, N_t)
    precoders: object
    H_eq: np.ndarray  # (K, J, N_s, N_s)
    noise_var: np.ndarray  # (K,) per-antenna
    stream_noise: np.ndarray  # (K,) mean post-combining noise per stream


def draw_link(cfg: SimConfig, snr_db, seed, tti) -> Link:
    params = channel_params(cfg)
    H_all = np.stack([to_frequency(gen_channel(params, sub_seed(seed, "channel", tti, k)), cfg.j)
                      for k in range(cfg.k)])
    pre = build_precoders(H_all, cfg.n_t_rf, cfg.n_r_rf, cfg.n_s, sub_seed(seed, "precoder", tti))
    H_eq = np.stack([effective_channel(H_all[k], pre, k) for k in range(cfg.k)])
    snr = 10.0 ** (snr_db / 10.0)
    signal = np.mean(np.sum(np.abs(H_eq) ** 2, axis=(2, 3)), axis=1) / cfg.n_s
    noise_var = signal / snr
    W = pre.combiner()
    stream_noise = noise_var * np.real(np.trace(W.conj().T @ W)) / cfg.n_s
    return Link(H_all, pre, H_eq, noise_var, stream_noise)


@dataclass
class UserOutcome:
    H_hat: np.ndarray
    X_hat: np.ndarray
    data_mask: np.ndarray  # (J, T) resource elements carrying data
    overhead: float
    blocks_failed: int = 0
    opt_iters: int = 0
    runtime_ms: float = 0.0
    H_history: List[np.ndarray] = field(default_factory=list, repr=False)
    error: str = ""


@dataclass
class TtiOutcome:
    link: Link
    X_data: np.ndarray  # (K, J, N_s, T) data symbols before pilot insertion
    indices: np.ndarray  # (K, J, N_s, T) symbol indices
    users: Dict[str, List[UserOutcome]]


def _run_receiver(name, cfg, c, link, X_data, snr_db, seed, tti):
    K, J, N_s, T = X_data.shape
    if name == "semiblind":
        part = BlockPartition(J, cfg.n_f)
        layout = make_pilot_layout(part, N_s, T, c)
        X_all = np.stack([embed_pilots(X_data[k], layout) for k in range(K)])
        mask = ~layout.mask(T)
        overhead = layout.overhead_fraction(T)
    else:
        kind = ORTHOGONAL if name == "pilot_orthogonal" else NON_ORTHOGONAL
        rb = cfg.rb_size if J % cfg.rb_size == 0 else J
        pattern = make_pattern(kind, K, N_s, J, T, rb_size=rb)
        X_all = X_data * ~pattern.mask[None, :, None, :]
        X_all = X_all + np.stack([pattern.pilot_grid(k, c.corner) for k in range(K)])
        mask = ~pattern.mask
        overhead = pattern.overhead_fraction

    raw = transmit(link.H_all, link.precoders, X_all, link.noise_var,
                   sub_seed(seed, "noise", tti))
    Y = combine(raw, link.precoders)  # (K, J, N_s, T)

    out = []
    for k in range(K):
        t0 = time.perf_counter()
        res = UserOutcome(None, None, mask, overhead)
        try:
            if name == "semiblind":
                est = jcesd(ReceivedGrid(Y[k], layout), c, receiver_config(cfg))
                res.H_hat, res.X_hat = est.H_hat, est.X_hat
                res.blocks_failed, res.opt_iters = est.blocks_failed, est.opt_iters
                res.H_history = est.H_history
            else:
                H_hat = pilot_ce(Y[k], pattern, k, c.corner, cfg.baseline_interp, cfg.n_c)
                X_soft = np.stack([lmmse_detect(H_hat[j], Y[k][j], link.stream_noise[k])
                                   for j in range(J)])
                res.H_hat, res.X_hat = H_hat, nearest(X_soft, c)[0]
        except JcesdError as exc:
            if cfg.strict_fail:
                raise
            res.error = f"{type(exc).__name__}: {exc}"
            res.H_hat = np.zeros((J, N_s, N_s), dtype=complex)
            res.X_hat = np.zeros((J, N_s, T), dtype=complex)
            res.blocks_failed = cfg.n_f if name == "semiblind" else 1
        res.runtime_ms = 1000.0 * (time.perf_counter() - t0)
        out.append(res)
    return out


def simulate_tti(cfg: SimConfig, snr_db, seed, tti, modulation=None,
                 receivers: Optional[Sequence[str]] = None) -> TtiOutcome:
    """One TTI: channels, precoders, data, and every requested receiver.

    All receivers see the same channels, data symbols and noise draw; only
    the pilot resource elements differ.
    """
    modulation = cfg.modulation if modulation is None else modulation
    c = make_constellation(modulation)
    link = draw_link(cfg, snr_db, seed, tti)
    g = rng(seed, "data", tti, modulation)
    idx = g.integers(0, c.order, size=(cfg.k, cfg.j, cfg.n_s, cfg.t))
    X_data = c.points[idx]
    users = {}
    for name in (cfg.receiver if receivers is None else receivers):
        users[name] = _run_receiver(name, cfg, c, link, X_data, snr_db, seed, tti)
    return TtiOutcome(link, X_data, idx, users)


@dataclass
class _Acc:
    nmse: float = 0.0
    sym_err: int = 0
    sym: int = 0
    bit_err: int = 0
    bits: int = 0
    credited: float = 0.0
    blocks: int = 0
    blocks_bad: int = 0
    blocks_failed: int = 0
    runtime_ms: float = 0.0
    opt_iters: int = 0


def _accumulate(acc: _Acc, u: UserOutcome, H_true, idx_true, c, mcs: McsEntry, cfg):
    acc.nmse += nmse_ratio(u.H_hat, H_true)
    _, idx_hat = nearest(u.X_hat, c)
    m = u.data_mask  # (J, T)
    for s in range(H_true.shape[-1]):
        tru = idx_true[:, s, :][m]
        det = idx_hat[:, s, :][m]
        acc.sym_err += int(np.sum(tru != det))
        acc.sym += tru.size
        tb = indices_to_bits(tru, c)
        db = indices_to_bits(det, c)
        acc.bit_err += int(np.sum(tb != db))
        acc.bits += tb.size
        block_size = m.size * c.bits_per_symbol
        credit, bad = throughput(db[None], tb[None], mcs, u.overhead, block_size,
                                 cfg.decode_margin)
        acc.credited += credit
        acc.blocks += 1
        acc.blocks_bad += bad
    acc.blocks_failed += u.blocks_failed
    acc.runtime_ms += u.runtime_ms
    acc.opt_iters += u.opt_iters


def _run_mode(cfg, snr_db, seed, mcs: McsEntry):
    c = make_constellation(mcs.constellation_size)
    accs = {r: [_Acc() for _ in range(cfg.k)] for r in cfg.receiver}
    for tti in range(cfg.num_ttis):
        out = simulate_tti(cfg, snr_db, seed, tti, modulation=c.order)
        for r, users in out.users.items():
            for k, u in enumerate(users):
                _accumulate(accs[r][k], u, out.link.H_eq[k], out.indices[k], c, mcs, cfg)
    return accs


def _row(snr_db, seed, k, r, acc: _Acc, cfg, mcs_index):
    n = cfg.num_ttis
    return MetricsRow(
        snr_db=float(snr_db), seed=int(seed), user=k, receiver=r,
        nmse_db=to_db(acc.nmse / n),
        ser=acc.sym_err / acc.sym if acc.sym else 0.0,
        ber=acc.bit_err / acc.bits if acc.bits else 0.0,
        throughput_bits=float(acc.credited), mcs_index=int(mcs_index),
        blocks_failed=int(acc.blocks_failed), runtime_ms=float(acc.runtime_ms),
        op_counts=int(acc.opt_iters))


def run_trial(cfg: SimConfig, snr_db, seed) -> List[MetricsRow]:
    """Metrics of every user and receiver for one ``(snr, seed)`` cell.

    With ``mcs_index="auto"`` every MCS of the table is simulated and each
    (user, receiver) reports the entry picked by link adaptation.
    """
    if cfg.mcs_index == "auto":
        modes = list(MCS_TABLE)
    elif cfg.mcs_index is None:
        modes = [uncoded(cfg.modulation)]
    else:
        modes = [mcs_entry(cfg.mcs_index)]
    results = {m.index: _run_mode(cfg, snr_db, seed, m) for m in modes}
    rows = []
    for k in range(cfg.k):
        for r in cfg.receiver:
            if len(modes) == 1:
                pick = modes[0].index
            else:
                pick = link_adapt({i: res[r][k].blocks_bad / res[r][k].blocks
                                   for i, res in results.items()})
            rows.append(_row(snr_db, seed, k, r, results[pick][r][k], cfg, pick))
    return rows


# --------------------------------------------------------------------------
# sweeps


def parse_snr_range(text: str) -> List[float]:
    """``"LO:HI:STEP"`` with ``HI`` included when it lies on the grid."""
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise InvalidArgumentError(f"expected LO:HI:STEP, got {text!r}") from exc
    if step <= 0 or hi < lo:
        raise InvalidArgumentError("need STEP > 0 and HI >= LO")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 10) for i in range(n)]


def _worker_count() -> int:
    env = os.environ.get("JCESD_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise InvalidArgumentError(f"JCESD_THREADS must be an integer, got {env!r}") from exc
        if n < 1:
            raise InvalidArgumentError("JCESD_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def _cell(args):
    cfg, snr, seed = args
    return run_trial(cfg, snr, seed)


def read_rows(path) -> List[List[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != CSV_HEADER:
            raise InvalidArgumentError(f"{path} has an unexpected header")
        return [row for row in reader if row]


def _write_atomic(path, rows: List[List[str]]):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".jcesd-", suffix=".csv", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            w.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell_key(row) -> tuple:
    return float(row[0]), int(row[1])


def sweep(cfg: SimConfig, snrs: Sequence[float], seeds: Sequence[int], out_path,
          resume=True, workers=None) -> List[List[str]]:
    """Run every ``(snr, seed)`` cell and write the CSV atomically.

    With ``resume`` the cells already complete in ``out_path`` are kept and
    not recomputed.  Rows are ordered by ``(snr, seed, user, receiver)``.
    """
    snrs = [float(s) for s in snrs]
    seeds = [int(s) for s in seeds]
    if not snrs or not seeds:
        raise InvalidArgumentError("sweep needs at least one SNR and one seed")
    directory = os.path.dirname(os.path.abspath(out_path))
    if not os.path.isdir(directory) or not os.access(directory, os.W_OK):
        raise OSError(f"cannot write to {directory}")

    per_cell = cfg.k * len(cfg.receiver)
    done: Dict[tuple, List[List[str]]] = {}
    if resume and os.path.exists(out_path):
        for row in read_rows(out_path):
            done.setdefault(_cell_key(row), []).append(row)
        done = {key: rows for key, rows in done.items() if len(rows) == per_cell}

    todo = [(s, sd) for s in snrs for sd in seeds if (s, sd) not in done]
    n_workers = min(workers or _worker_count(), max(1, len(todo)))
    jobs = [(cfg, s, sd) for s, sd in todo]
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_cell, jobs))
    else:
        results = [_cell(j) for j in jobs]
    for (s, sd), rows in zip(todo, results):
        done[(s, sd)] = [r.cells() for r in rows]

    order = {r: i for i, r in enumerate(cfg.receiver)}
    all_rows = [row for key in sorted(done) for row in done[key]]
    all_rows.sort(key=lambda r: (float(r[0]), int(r[1]), int(r[2]), order.get(r[3], 99)))
    _write_atomic(out_path, all_rows)
    return all_rows


def rows_to_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()

"""Self-checks behind ``jcesd validate``.

Each check returns a :class:`CheckResult`; suites are plain tuples of
check functions.  The checks are fast versions of the acceptance tests
and use independent references (finite differences, Monte-Carlo, closed
forms) wherever one exists.
"""

import itertools
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from .baseline import theoretical_gain
from .channel import ChannelParams, gen_channel, to_frequency
from .convergence import init_bound_check, marcum_q
from .modem import LlrParams, augment, llr, make_constellation
from .optimizer import (
    FittingProblem,
    objective_and_gradient,
    params_from_matrix,
    real_embed,
    real_stack,
    solve,
)
from .precoding import build_precoders, iui_ratio
from .receiver import feasible_start, semiblind_block
from .seeding import rng


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


# --------------------------------------------------------------------------
# scenario helpers shared with the acceptance tests


def random_channel(N_s, g):
    return (g.standard_normal((N_s, N_s)) + 1j * g.standard_normal((N_s, N_s))) / np.sqrt(2)


def corner_rich_symbols(c, N_s, n, g):
    """``n`` random symbol vectors whose first columns enumerate every corner vector."""
    corners = [complex(s1 * c.boundary, s2 * c.boundary)
               for s1 in (-1, 1) for s2 in (-1, 1)]
    fixed = np.array(list(itertools.product(corners, repeat=N_s))).T
    if fixed.shape[1] > n:
        raise ValueError("too few symbols to hold every corner vector")
    rest = c.points[g.integers(0, c.order, (N_s, n - fixed.shape[1]))]
    return np.concatenate([fixed, rest], axis=1)


def admissible_transforms(N_s):
    """Every permutation times a diagonal of ``{1, -1, i, -i}``, complex form."""
    out = []
    for perm in itertools.permutations(range(N_s)):
        P = np.eye(N_s)[list(perm)]
        for d in itertools.product((1, -1, 1j, -1j), repeat=N_s):
            out.append(np.diag(d) @ P)
    return out


def atm_distance(U, H):
    """Smallest ``||U real(H) - real(T)||_F`` over admissible transforms ``T``."""
    M = U @ real_embed(H)
    return min(np.linalg.norm(M - real_embed(T)) for T in admissible_transforms(H.shape[0]))


def noiseless_fit(N_s, seed, n_sym=256, use_augmentation=False, start_error=0.1, M=4):
    """Solve the noiseless fit of ``Y = H X`` from a perturbed-inverse start.

    Returns ``(U, H, solution)``.
    """
    g = rng(seed, "noiseless-fit", N_s)
    c = make_constellation(M)
    H = random_channel(N_s, g)
    X = corner_rich_symbols(c, N_s, n_sym, g)
    Y = H @ X
    samples = augment(Y) if use_augmentation else Y
    S = real_stack(samples)
    delta = random_channel(N_s, g)
    delta *= start_error * np.linalg.norm(H) / np.linalg.norm(delta)
    U0 = feasible_start(real_embed(np.linalg.inv(H + delta)), S, c.boundary)
    sol = solve(FittingProblem(S, c.boundary, N_s), U0)
    return sol.U, H, sol


# --------------------------------------------------------------------------
# individual checks


def check_gradient(n_cases=20, tol=1e-6, seed=0) -> CheckResult:
    g = rng(seed, "gradient")
    worst = 0.0
    for case in range(n_cases):
        N_s = 2 if case % 2 == 0 else 4
        x = params_from_matrix(real_embed(random_channel(N_s, g)))
        _, grad = objective_and_gradient(x, N_s)
        h = 1e-6
        fd = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h
            fd[i] = (objective_and_gradient(x + e, N_s)[0]
                     - objective_and_gradient(x - e, N_s)[0]) / (2 * h)
        worst = max(worst, np.max(np.abs(grad - fd)) / max(np.max(np.abs(fd)), 1e-12))
    return CheckResult("gradient", worst <= tol, f"max relative error {worst:.2e}")


def check_constellations() -> CheckResult:
    bad = []
    for M in (4, 16, 64, 256):
        c = make_constellation(M)
        if abs(np.mean(np.abs(c.points) ** 2) - 1) > 1e-12:
            bad.append(f"power M={M}")
        side = int(np.sqrt(M))
        if abs(c.boundary - (side - 1) / np.sqrt(2 * (M - 1) / 3)) > 1e-12:
            bad.append(f"lambda M={M}")
        pts = set(np.round(c.points, 12))
        for q in (-1, 1j, -1j):
            if set(np.round(q * c.points, 12)) != pts:
                bad.append(f"rotation closure M={M}")
    c = make_constellation(16)
    # the origin is equidistant from the four inner points
    center = llr(0.0, c, LlrParams(0.05))
    if abs(center - np.log(1 / 3)) > 1e-9:
        bad.append(f"llr center {center}")
    return CheckResult("constellations", not bad, "ok" if not bad else ", ".join(bad))


def check_flat_zf(n_seeds=20, limit_db=-80.0) -> CheckResult:
    params = ChannelParams(num_taps=1, tx_array=(8, 8), rx_array=(2, 4))
    worst = -np.inf
    for seed in range(n_seeds):
        H_all = np.stack([to_frequency(gen_channel(params, (seed, k)), 48) for k in range(4)])
        pre = build_precoders(H_all, 16, 4, 2, seed)
        worst = max(worst, 10 * np.log10(max(iui_ratio(H_all, pre).max(), 1e-300)))
    return CheckResult("flat_zf", worst <= limit_db, f"worst IUI {worst:.1f} dB")


def check_overhead() -> CheckResult:
    # one 144-RE resource block: 96 orthogonal pilot REs or 2 corner pilots
    g196 = theoretical_gain(96 / 144, 2 / 144)
    g20 = theoretical_gain(0.17, 2 / 144)
    ok = abs(g196 - 1.96) <= 0.02 and abs(g20 - 0.20) <= 0.02
    return CheckResult("overhead", ok, f"{100 * g196:.1f}% and {100 * g20:.1f}%")


def check_dft(seed=0) -> CheckResult:
    params = ChannelParams(num_taps=3, tx_array=(2, 2), rx_array=(1, 2))
    taps = gen_channel(params, seed)
    H = to_frequency(taps, 16)
    back = np.fft.ifft(H, axis=0)[:3]
    err = float(np.max(np.abs(back - taps)))
    return CheckResult("dft_roundtrip", err <= 1e-10, f"max error {err:.1e}")


def check_noiseless_recovery(n_seeds=10, limit_db=-40.0) -> CheckResult:
    c = make_constellation(4)
    good = 0
    for seed in range(n_seeds):
        g = rng(seed, "recovery")
        H = random_channel(2, g)
        X = corner_rich_symbols(c, 2, 256, g)
        X[:, :2] = c.corner * np.eye(2)
        res = semiblind_block(H @ X, [0, 1], c)
        if not res.failed:
            err = np.linalg.norm(res.H - H) ** 2 / np.linalg.norm(H) ** 2
            good += 10 * np.log10(max(err, 1e-300)) <= limit_db
    return CheckResult("noiseless_recovery", good >= 0.95 * n_seeds,
                       f"{good}/{n_seeds} seeds below {limit_db:.0f} dB")


def check_atm(n_seeds=10, tol=1e-3) -> CheckResult:
    good = 0
    total = 0
    for N_s in (1, 2):
        for seed in range(n_seeds):
            U, H, _ = noiseless_fit(N_s, seed)
            good += atm_distance(U, H) <= tol
            total += 1
    return CheckResult("atm", good >= 0.95 * total, f"{good}/{total} fits on an admissible transform")


def check_augmentation(n_seeds=5, tol=1e-6) -> CheckResult:
    worst = 0.0
    for seed in range(n_seeds):
        U1, H, _ = noiseless_fit(2, seed)
        U2, _, _ = noiseless_fit(2, seed, use_augmentation=True)
        worst = max(worst, min(np.linalg.norm(real_embed(T) @ U1 - U2)
                               for T in admissible_transforms(2)))
    return CheckResult("augmentation", worst <= tol, f"max aligned difference {worst:.1e}")


def check_appendix_bound(n_draws=100, ratio=1e-3, slack=1.05, seed=0) -> CheckResult:
    g = rng(seed, "appendix")
    worst = 0.0
    for _ in range(n_draws):
        H = random_channel(4, g)
        D = random_channel(4, g)
        D *= ratio * np.linalg.norm(H) / np.linalg.norm(D)
        lhs, rhs = init_bound_check(H, D)
        worst = max(worst, lhs / rhs)
    return CheckResult("appendix_bound", worst <= slack, f"max lhs/rhs {worst:.4f}")


MARCUM_POINTS = ((1, 0.0, 1.5), (4, 1.0, 2.5), (4, 2.0, 3.0), (9, 3.0, 4.5), (16, 2.5, 6.0))


def marcum_monte_carlo(M, a, b, n, g):
    """Empirical ``P(chi'^2 > b^2)`` with ``2M`` dof and non-centrality ``a^2``."""
    z = g.standard_normal((n, 2 * M))
    z[:, 0] += a
    return float(np.mean(np.sum(z * z, axis=1) > b * b))


def check_marcum(n=1_000_000, tol=2e-3, seed=0) -> CheckResult:
    g = rng(seed, "marcum")
    worst = 0.0
    for M, a, b in MARCUM_POINTS:
        worst = max(worst, abs(marcum_q(M, a, b) - marcum_monte_carlo(M, a, b, n, g)))
    return CheckResult("marcum_q", worst <= tol, f"max deviation {worst:.1e}")


SUITES: Dict[str, Tuple[Callable[[], CheckResult], ...]] = {
    "invariants": (check_gradient, check_constellations, check_flat_zf, check_overhead,
                   check_dft, check_noiseless_recovery, check_atm, check_augmentation),
    "appendix": (check_appendix_bound, check_marcum),
}
SUITES["all"] = SUITES["invariants"] + SUITES["appendix"]


def run_suite(name="all") -> List[CheckResult]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    results = []
    for check in SUITES[name]:
        try:
            results.append(check())
        except Exception as exc:  # a crashing check is a failed check
            results.append(CheckResult(check.__name__[6:], False, f"{type(exc).__name__}: {exc}"))
    return results

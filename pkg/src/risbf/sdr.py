"""Semidefinite relaxation baseline.

The phase design is homogenized into ``max theta_bar^H R theta_bar`` over unit
modulus ``theta_bar`` (N+1 entries), relaxed to ``max tr(RQ)`` over PSD ``Q``
with unit diagonal, and a feasible point is recovered from ``Q`` by Gaussian
randomization.

The relaxed problem is the complex MaxCut SDP.  It is solved with a low-rank
factorization ``Q = V V^H`` whose rows are kept on the unit sphere, using
projected gradient ascent with a backtracking step size.  With rank
``p >= sqrt(2 n)`` this factorization has no spurious local maxima for generic
cost matrices, and random restarts guard the rest.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .channel import ChannelRealization
from .objective import cascaded, normalize_phase

log = logging.getLogger(__name__)

PSD_CLAMP = 1e-9


@dataclass(frozen=True)
class SolverOptions:
    trials: int = 100
    tol: float = 1e-4
    restarts: int = 20
    max_iters: int = 5000
    rel_change: float = 1e-7
    rank: Optional[int] = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.tol <= 0 or self.rel_change <= 0:
            raise ValueError("tolerances must be positive")
        if self.restarts < 1 or self.max_iters < 1:
            raise ValueError("restarts and max_iters must be at least 1")


@dataclass(frozen=True)
class HomogenizedProblem:
    R: np.ndarray
    h_d_norm_sq: float

    @property
    def size(self) -> int:
        return self.R.shape[0]

    def value(self, theta_bar) -> float:
        theta_bar = np.asarray(theta_bar, dtype=complex)
        return float(np.vdot(theta_bar, self.R @ theta_bar).real)


@dataclass(frozen=True)
class SdrSolution:
    Q: np.ndarray
    sdp_value: float
    iterations: int
    converged: bool
    theta_bar_best: Optional[np.ndarray] = None
    randomization_values: list = field(default_factory=list)
    theta: Optional[np.ndarray] = None

    @property
    def best_value(self) -> float:
        return max(self.randomization_values)


def build_homogenized(ch: ChannelRealization) -> HomogenizedProblem:
    A = cascaded(ch.G, ch.h_r)  # G diag(h_r)
    N = ch.N
    R = np.zeros((N + 1, N + 1), dtype=complex)
    R[:N, :N] = A.conj().T @ A
    R[:N, N] = A.conj().T @ ch.h_d
    R[N, :N] = R[:N, N].conj()
    return HomogenizedProblem(R=R, h_d_norm_sq=float(np.vdot(ch.h_d, ch.h_d).real))


def default_rank(n: int) -> int:
    return min(n, math.ceil(math.sqrt(2 * n)))


def _normalize_rows(V: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return V / norms


def _objective(R: np.ndarray, V: np.ndarray) -> float:
    return float(np.real(np.vdot(V, R @ V)))


def _ascent(R: np.ndarray, V: np.ndarray, opts: SolverOptions):
    """Projected gradient ascent of tr(V^H R V) over unit-norm rows."""
    f = _objective(R, V)
    step = 1.0
    for it in range(1, opts.max_iters + 1):
        grad = 2.0 * (R @ V)
        # tangent component of the gradient on each row's sphere
        radial = np.sum((grad * V.conj()).real, axis=1, keepdims=True)
        tangent = grad - radial * V
        slope = float(np.vdot(tangent, tangent).real)
        if slope <= 1e-30:
            return V, f, it, True
        while True:
            V_new = _normalize_rows(V + step * grad)
            f_new = _objective(R, V_new)
            if f_new >= f + 1e-4 * step * slope or step < 1e-12:
                break
            step *= 0.5
        if f_new < f:
            return V, f, it, False
        change = f_new - f
        V, f = V_new, f_new
        if change <= opts.rel_change * max(abs(f), 1e-300):
            return V, f, it, True
        step *= 2.0
    return V, f, opts.max_iters, False


def solve_sdp(prob: HomogenizedProblem, opts: SolverOptions = SolverOptions(),
              rng: Optional[np.random.Generator] = None) -> SdrSolution:
    """Maximize tr(RQ) s.t. Q PSD, diag(Q) = 1.

    Restarts stop early once two independent starts agree on the optimum to
    within ``opts.tol`` (relative); otherwise up to ``opts.restarts`` are run
    and the best is kept.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    R = np.asarray(prob.R, dtype=complex)
    n = R.shape[0]
    scale = np.max(np.abs(R))
    if scale == 0:
        return SdrSolution(Q=np.eye(n, dtype=complex), sdp_value=0.0, iterations=0, converged=True)
    Rs = R / scale
    p = opts.rank or default_rank(n)

    best = None
    agree = 0
    total_iters = 0
    for _ in range(opts.restarts):
        V0 = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
        V, f, iters, ok = _ascent(Rs, _normalize_rows(V0), opts)
        total_iters += iters
        if best is None:
            best = (V, f, ok)
            continue
        gap = opts.tol * max(abs(f), abs(best[1]), 1e-300)
        if f > best[1] + gap:
            best = (V, f, ok)
            agree = 0
        elif f >= best[1] - gap:
            agree += 1
            if f > best[1]:
                best = (V, f, ok)
        if agree >= 1:
            break

    V, f, ok = best
    Q = V @ V.conj().T
    sdp_value = f * scale
    bound = n * float(np.linalg.eigvalsh(R)[-1])
    if sdp_value > bound + 1e-9 * max(abs(bound), scale):
        raise RuntimeError(f"SDP value {sdp_value} exceeds trace bound {bound}")
    if not ok:
        log.warning("SDP solver stopped at max_iters without meeting tolerance")
    return SdrSolution(Q=Q, sdp_value=sdp_value, iterations=total_iters, converged=ok)


def psd_factor(Q: np.ndarray) -> np.ndarray:
    """L with L L^H = Q after clamping eigenvalues below PSD_CLAMP to zero."""
    w, U = np.linalg.eigh(Q)
    w = np.where(w < PSD_CLAMP, 0.0, w)
    return U * np.sqrt(w)


def gaussian_randomize(sol: SdrSolution, prob: HomogenizedProblem, trials: int = 100,
                       rng: Optional[np.random.Generator] = None) -> SdrSolution:
    """Draw ``trials`` candidates from CN(0, Q), project to unit modulus, keep the best."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if rng is None:
        rng = np.random.default_rng(0)
    L = psd_factor(sol.Q)
    n = L.shape[0]
    # one (re, im) pair of n normals per trial, in trial order
    z = rng.standard_normal((trials, 2, n))
    xi = (z[:, 0, :] + 1j * z[:, 1, :]) @ L.T / math.sqrt(2.0)
    candidates = normalize_phase(xi)
    values = np.einsum("ti,ij,tj->t", candidates.conj(), prob.R, candidates).real
    k = int(np.argmax(values))
    return replace(sol, theta_bar_best=candidates[k], randomization_values=values.tolist())


def extract_theta(theta_bar) -> np.ndarray:
    """theta = Norm(theta_bar[:N] / theta_bar[N]); a zero last entry is treated as 1."""
    theta_bar = np.asarray(theta_bar, dtype=complex).reshape(-1)
    t = theta_bar[-1]
    if t == 0:
        t = 1.0
    return normalize_phase(theta_bar[:-1] / t)


def solve_sdr(ch: ChannelRealization, opts: SolverOptions = SolverOptions(),
              rng: Optional[np.random.Generator] = None) -> SdrSolution:
    if rng is None:
        rng = np.random.default_rng(0)
    prob = build_homogenized(ch)
    sol = solve_sdp(prob, opts, rng)
    sol = gaussian_randomize(sol, prob, opts.trials, rng)
    return replace(sol, theta=extract_theta(sol.theta_bar_best))


def sdr_beamform(ch: ChannelRealization, opts: SolverOptions = SolverOptions(),
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    return solve_sdr(ch, opts, rng).theta

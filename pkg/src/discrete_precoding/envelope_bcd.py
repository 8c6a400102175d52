"""Concave-envelope block coordinate descent for discrete-rate precoding.

The discrete rate of every stream is replaced by its concave envelope in a
QoS domain, the domain map is linearized around ``1 / w``, and the result
is maximized cyclically over receive filters (MMSE), linearization weights
(``w = 1 / e``) and precoders (a convex program solved by a log-barrier
interior-point method).  A power penalty ``kappa * sum ||V||_F^2`` makes the
algorithm prefer the least power among designs with equal weighted rate.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .link_metrics import (RateSets, evaluate_rates, mmse_receivers, per_user_rate_sets,
                           power_used, stream_mses)
from .network_model import NetworkRealization
from .rate_model import (DomainError, EnvelopeModel, QosDomain, RateSet, build_envelope,
                         to_fraction)

__all__ = [
    "BcdConfig",
    "BcdState",
    "IterationRecord",
    "SubproblemInfo",
    "regularizer_kappa",
    "initial_precoders",
    "update_receivers",
    "update_weights",
    "surrogate_objective",
    "solve_precoder_subproblem",
    "run",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BcdConfig:
    qos_domain: QosDomain = QosDomain.CONTINUOUS_RATE
    max_iterations: int = 500
    rel_tolerance: float = 1e-3
    inner_tolerance: float = 1e-6
    barrier_factor: float = 10.0
    newton_tolerance: float = 1e-10
    max_newton_steps: int = 100
    mse_floor: float = 1e-12
    kappa: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "qos_domain", QosDomain.parse(self.qos_domain))
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("rel_tolerance", "inner_tolerance", "newton_tolerance", "mse_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.barrier_factor > 1:
            raise ValueError("barrier_factor must exceed 1")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    weighted_discrete: float
    weighted_continuous: float


@dataclass(frozen=True)
class SubproblemInfo:
    objective: float
    warm_objective: float
    newton_steps: int
    duality_gap: float
    fallback: bool


@dataclass
class BcdState:
    V: np.ndarray
    U: np.ndarray
    w: np.ndarray
    kappa: float
    trace: list[IterationRecord] = field(default_factory=list)
    block_objectives: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    fallbacks: int = 0


# ---------------------------------------------------------------------------
# power regularization

def _fraction_gcd(values: Sequence[Fraction]) -> Fraction:
    den = 1
    for v in values:
        den = den * v.denominator // math.gcd(den, v.denominator)
    g = 0
    for v in values:
        g = math.gcd(g, v.numerator * (den // v.denominator))
    return Fraction(g, den)


def regularizer_kappa(rate_sets: RateSets, weights, power_budgets) -> float:
    """``delta / (sum(P) + 1)`` with ``delta`` the gcd of all nonzero
    weighted rates ``w_ik * q``.

    Any two distinct weighted sum rates differ by an integer multiple of
    this gcd, so it never exceeds the smallest nonzero gap between them.
    """
    weights = np.asarray(weights, dtype=float)
    I, K = weights.shape
    sets = per_user_rate_sets(rate_sets, I, K)
    vals = []
    for i in range(I):
        for k in range(K):
            wf = to_fraction(float(weights[i, k]))
            vals.extend(wf * q for q in sets[i][k].rates if wf * q != 0)
    if not vals:
        raise DomainError("all weighted rates are zero")
    delta = _fraction_gcd(vals)
    return float(delta) / (float(np.sum(power_budgets)) + 1.0)


# ---------------------------------------------------------------------------
# receiver and weight blocks

def initial_precoders(real: NetworkRealization) -> np.ndarray:
    """Full-power precoders on the top right singular vectors of the direct
    channel, equal power per stream."""
    I, K, N, M, d = real.shape
    V = np.zeros((I, K, M, d), dtype=complex)
    for i in range(I):
        scale = math.sqrt(real.power[i] / (K * d))
        for k in range(K):
            _, _, Vh = np.linalg.svd(real.H[i, k, i])
            V[i, k] = scale * Vh[:d].conj().T
    return V


def update_receivers(state: BcdState, real: NetworkRealization) -> np.ndarray:
    return mmse_receivers(real, state.V)


def update_weights(state: BcdState, real: NetworkRealization, mse_floor: float = 1e-12) -> np.ndarray:
    e = stream_mses(real, state.V, state.U)
    return 1.0 / np.clip(e, mse_floor, 1.0)


# ---------------------------------------------------------------------------
# linearized envelope as affine constraints in e

@dataclass(frozen=True)
class _Pieces:
    """Per-stream constraints ``t <= A - B * e`` (``B >= 0``); padded pieces
    are masked out."""

    A: np.ndarray       # (S, P)
    B: np.ndarray       # (S, P)
    mask: np.ndarray    # (S, P) bool


def _linearized_pieces(envs: list[list[EnvelopeModel]], dom: QosDomain, w: np.ndarray) -> _Pieces:
    I, K, d = w.shape
    n_p = max(len(env.slopes) for row in envs for env in row)
    S = I * K * d
    A = np.zeros((S, n_p))
    B = np.zeros((S, n_p))
    mask = np.zeros((S, n_p), dtype=bool)
    z = 1.0 / w.reshape(S)
    if dom is QosDomain.MSE:
        eta0 = np.zeros(S)
        slope = np.ones(S)
    else:
        slope = np.asarray(dom.derivative(z))
        eta0 = np.asarray(dom.eta(z)) - slope * z
    for i in range(I):
        for k in range(K):
            env = envs[i][k]
            c = env.slope_array
            m = env.offset_array
            for n in range(d):
                s = (i * K + k) * d + n
                p = len(c)
                A[s, :p] = c * eta0[s] + m
                B[s, :p] = -c * slope[s]
                mask[s, :p] = True
    return _Pieces(A, B, mask)


def _lin_rates(pieces: _Pieces, e: np.ndarray) -> np.ndarray:
    vals = pieces.A - pieces.B * e[:, None]
    return np.min(np.where(pieces.mask, vals, np.inf), axis=1)


def surrogate_objective(real: NetworkRealization, V: np.ndarray, U: np.ndarray, w: np.ndarray,
                        envs: list[list[EnvelopeModel]], dom: QosDomain, kappa: float) -> float:
    """Weighted linearized-envelope rate minus the power penalty."""
    pieces = _linearized_pieces(envs, dom, w)
    e = stream_mses(real, V, U).reshape(-1)
    omega = np.repeat(real.weights.reshape(-1), real.streams)
    return float(np.sum(omega * _lin_rates(pieces, e)) - kappa * np.sum(np.abs(V) ** 2))


# ---------------------------------------------------------------------------
# precoder block: log-barrier interior point

class _PrecoderProblem:
    """maximize sum_s omega_s t_s - kappa ||x||^2
    s.t. t_s <= A_sp - B_sp e_s(x),  sum_{c in BS j} ||x_c||^2 <= P_j.

    ``x`` holds the columns of every precoder served by a BS with positive
    budget as rows ``[Re v, Im v]``.  Streams with zero weight carry no
    epigraph variable; their precoders only pay the power penalty.
    """

    def __init__(self, real: NetworkRealization, U: np.ndarray, pieces: _Pieces, kappa: float):
        I, K, N, M, d = real.shape
        self.M = M
        S = I * K * d
        bs_of = np.repeat(np.arange(I), K * d)
        self.cols = np.flatnonzero(real.power[bs_of] > 0)
        self.col_bs = bs_of[self.cols]
        self.bs = np.flatnonzero(real.power > 0)
        self.budget = real.power[self.bs]
        self.col_bs_pos = np.searchsorted(self.bs, self.col_bs)

        omega = np.repeat(real.weights.reshape(-1), d)
        self.streams = np.flatnonzero(omega > 0)
        self.omega = omega[self.streams]
        self.A = pieces.A[self.streams]
        self.B = pieces.B[self.streams]
        self.mask = pieces.mask[self.streams]
        self.kappa = kappa

        # a^H for stream s and BS j: u_s^H H_{s, j}, shape (S, I, M)
        UH = np.einsum("ikan,ikjam->iknjm", U.conj(), real.H).reshape(S, I, M)
        self.UH = UH[self.streams]                           # (Sa, I, M)
        self.UHc = self.UH[:, self.col_bs, :]                # (Sa, C, M)
        unorm = np.sum(np.abs(U) ** 2, axis=2).reshape(S)
        noise = np.repeat(real.noise.reshape(-1), d)
        self.const = (1.0 + noise * unorm)[self.streams]
        pos = {c: n for n, c in enumerate(self.cols)}
        self.own = np.array([pos.get(s, -1) for s in self.streams], dtype=int)
        self.has_own = self.own >= 0
        self.n_con = int(self.mask.sum()) + len(self.bs)

    # x <-> V ---------------------------------------------------------------
    def pack(self, V: np.ndarray) -> np.ndarray:
        Vc = np.moveaxis(V, -1, -2).reshape(-1, self.M)[self.cols]
        return np.concatenate([Vc.real, Vc.imag], axis=1)

    def unpack(self, x: np.ndarray, shape) -> np.ndarray:
        I, K, M, d = shape
        cols = np.zeros((I * K * d, M), dtype=complex)
        cols[self.cols] = x[:, :M] + 1j * x[:, M:]
        return np.moveaxis(cols.reshape(I, K, d, M), -1, -2)

    # model -----------------------------------------------------------------
    def gains(self, x: np.ndarray) -> np.ndarray:
        Vc = x[:, :self.M] + 1j * x[:, self.M:]
        return np.einsum("scm,cm->sc", self.UHc, Vc)

    def mse(self, x: np.ndarray, P: Optional[np.ndarray] = None) -> np.ndarray:
        if P is None:
            P = self.gains(x)
        e = self.const + np.sum(np.abs(P) ** 2, axis=1)
        own = P[self.has_own, self.own[self.has_own]]
        e[self.has_own] -= 2.0 * own.real
        return e

    def power_slack(self, x: np.ndarray) -> np.ndarray:
        per_col = np.sum(x * x, axis=1)
        return self.budget - np.bincount(self.col_bs_pos, per_col, minlength=len(self.bs))

    def rate_slack(self, e: np.ndarray, t: np.ndarray) -> np.ndarray:
        r = self.A - self.B * e[:, None] - t[:, None]
        return np.where(self.mask, r, 1.0)

    def objective(self, x: np.ndarray) -> float:
        e = self.mse(x)
        vals = np.where(self.mask, self.A - self.B * e[:, None], np.inf)
        return float(self.omega @ np.min(vals, axis=1) - self.kappa * np.sum(x * x))

    def barrier(self, x, t, tau) -> float:
        r = self.rate_slack(self.mse(x), t)
        rp = self.power_slack(x)
        if np.any(r <= 0) or np.any(rp <= 0):
            return math.inf
        f = tau * (self.kappa * np.sum(x * x) - self.omega @ t)
        return float(f - np.sum(np.log(r)[self.mask]) - np.sum(np.log(rp)))

    def _line(self, x, t, dx, dt, P):
        """Coefficients of every slack as a quadratic in the step length."""
        Pd = self.gains(dx)
        e1 = 2.0 * np.sum((P.conj() * Pd).real, axis=1)
        own = self.has_own
        e1[own] -= 2.0 * Pd[own, self.own[own]].real
        e2 = np.sum(np.abs(Pd) ** 2, axis=1)
        nb = len(self.bs)
        p1 = -2.0 * np.bincount(self.col_bs_pos, np.sum(x * dx, axis=1), minlength=nb)
        p2 = -np.bincount(self.col_bs_pos, np.sum(dx * dx, axis=1), minlength=nb)
        r1 = -self.B * e1[:, None] - dt[:, None]
        r2 = -self.B * e2[:, None]
        return r1, r2, p1, p2

    def _interior(self, x, t) -> bool:
        r = self.rate_slack(self.mse(x), t)
        return bool(np.all(r > 0) and np.all(self.power_slack(x) > 0))

    @staticmethod
    def _max_step(c0, c1, c2) -> float:
        """Largest s with c0 + c1 s + c2 s^2 > 0 on [0, s] (c0 > 0, c2 <= 0)."""
        c0, c1, c2 = (np.ravel(a) for a in (c0, c1, c2))
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = np.sqrt(np.maximum(c1 * c1 - 4.0 * c2 * c0, 0.0))
            quad = (-c1 - disc) / (2.0 * c2)
            lin = np.where(c1 < 0, -c0 / c1, np.inf)
        roots = np.where(c2 < 0, quad, lin)
        roots = roots[np.isfinite(roots) & (roots > 0)]
        return float(roots.min()) if roots.size else math.inf

    # Newton step with the epigraph variables eliminated --------------------
    def newton_step(self, x, t, tau):
        M = self.M
        C = x.shape[0]
        P = self.gains(x)
        e = self.mse(x, P)
        r = self.rate_slack(e, t)
        inv = np.where(self.mask, 1.0 / r, 0.0)
        inv2 = inv * inv
        zeta = np.sum(self.B * inv, axis=1)
        rho = np.sum(inv, axis=1)
        alpha = np.sum(self.B * self.B * inv2, axis=1)
        beta = np.sum(self.B * inv2, axis=1)
        gamma = np.sum(inv2, axis=1)

        # gradient of e_s w.r.t. x, shape (Sa, C * 2M)
        D = P.copy()
        D[self.has_own, self.own[self.has_own]] -= 1.0
        Z = D[:, :, None] * self.UHc.conj()
        G = 2.0 * np.concatenate([Z.real, Z.imag], axis=2).reshape(len(e), -1)

        rp = self.power_slack(x)
        rpc = rp[self.col_bs_pos]
        xf = x.reshape(-1)
        g_t = rho - tau * self.omega
        g_x = 2.0 * tau * self.kappa * xf + zeta @ G
        g_x += (2.0 * x / rpc[:, None]).reshape(-1)

        nx = C * 2 * M
        Ga = G * (alpha - beta * beta / gamma)[:, None]
        Hm = G.T @ Ga
        Hm[np.diag_indices(nx)] += 2.0 * tau * self.kappa + np.repeat(2.0 / rpc, 2 * M)
        # curvature of e: block diagonal, one block per precoder column
        Q = np.einsum("s,sjm,sjn->jmn", zeta, self.UH.conj(), self.UH)
        R = np.empty((len(Q), 2 * M, 2 * M))
        R[:, :M, :M] = R[:, M:, M:] = 2.0 * Q.real
        R[:, :M, M:] = -2.0 * Q.imag
        R[:, M:, :M] = 2.0 * Q.imag
        H4 = Hm.reshape(C, 2 * M, C, 2 * M)
        ar = np.arange(C)
        H4[ar, :, ar, :] += R[self.col_bs]
        # power barrier: rank one per BS
        W = np.zeros((len(self.bs), C, 2 * M))
        W[self.col_bs_pos, ar] = x * (2.0 / rpc)[:, None]
        W = W.reshape(len(self.bs), -1)
        Hm += W.T @ W

        rhs = -(g_x - G.T @ (beta * g_t / gamma))
        try:
            dx = cho_solve(cho_factor(Hm, check_finite=False), rhs, check_finite=False)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(Hm, rhs, rcond=None)[0]
        dt = -(g_t + beta * (G @ dx)) / gamma
        dx = dx.reshape(x.shape)
        slope = float(g_x @ dx.reshape(-1) + g_t @ dt)
        return dx, dt, -slope, slope, P, r, rp

    def solve(self, x0: np.ndarray, tol: float, factor: float, newton_tol: float,
              max_steps: int):
        x = x0 * (1.0 - 1e-6)
        if np.any(self.power_slack(x) <= 0):
            # budget already violated: pull inside along the ray
            used = np.maximum(self.budget - self.power_slack(x), 1e-300)
            scale = np.minimum(1.0, np.sqrt(self.budget / used) * (1.0 - 1e-6))
            x = x * scale[self.col_bs_pos][:, None]
        e = self.mse(x)
        vals = np.where(self.mask, self.A - self.B * e[:, None], np.inf)
        t = np.min(vals, axis=1) - 1e-6
        tau = max(1.0, self.n_con / (1e-2 * (1.0 + abs(self.objective(x)))))
        steps = 0
        m = self.mask
        while True:
            for _ in range(max_steps):
                dx, dt, dec, slope, P, r, rp = self.newton_step(x, t, tau)
                steps += 1
                if dec / 2.0 <= newton_tol:
                    break
                r1, r2, p1, p2 = self._line(x, t, dx, dt, P)
                s_max = min(self._max_step(r[m], r1[m], r2[m]), self._max_step(rp, p1, p2))
                s = min(1.0, 0.99 * s_max)
                # barrier along the line, from the quadratic slack models
                q0 = self.kappa * np.sum(x * x) - self.omega @ t
                q1 = 2.0 * self.kappa * np.sum(x * dx) - self.omega @ dt
                q2 = self.kappa * np.sum(dx * dx)
                f0 = tau * q0 - np.sum(np.log(r[m])) - np.sum(np.log(rp))
                while s > 1e-14:
                    rs = r[m] + s * (r1[m] + s * r2[m])
                    ps = rp + s * (p1 + s * p2)
                    if np.all(rs > 0) and np.all(ps > 0):
                        fs = tau * (q0 + s * (q1 + s * q2)) - np.sum(np.log(rs)) - np.sum(np.log(ps))
                        # the slack models are exact up to rounding; confirm
                        if fs <= f0 + 0.25 * s * slope and self._interior(x + s * dx, t + s * dt):
                            break
                    s *= 0.5
                if s <= 1e-14:
                    break
                x, t = x + s * dx, t + s * dt
            gap = self.n_con / tau
            if gap < tol:
                return x, steps, gap
            tau *= factor


def solve_precoder_subproblem(state: BcdState, real: NetworkRealization,
                              envelopes: list[list[EnvelopeModel]], kappa: float,
                              cfg: BcdConfig) -> tuple[np.ndarray, SubproblemInfo]:
    """Maximize the linearized surrogate over precoders, receivers and
    weights fixed.

    Returns the warm start unchanged if the solver does not improve on it.
    """
    pieces = _linearized_pieces(envelopes, cfg.qos_domain, state.w)
    prob = _PrecoderProblem(real, state.U, pieces, kappa)
    x0 = prob.pack(state.V)
    warm = surrogate_objective(real, state.V, state.U, state.w, envelopes, cfg.qos_domain, kappa)
    if x0.size == 0 or prob.streams.size == 0:
        # nothing to transmit, or only the power penalty is left
        V = np.zeros_like(state.V)
        obj = surrogate_objective(real, V, state.U, state.w, envelopes, cfg.qos_domain, kappa)
        return V, SubproblemInfo(obj, warm, 0, 0.0, False)
    x, steps, gap = prob.solve(x0, cfg.inner_tolerance, cfg.barrier_factor,
                               cfg.newton_tolerance, cfg.max_newton_steps)
    V = prob.unpack(x, state.V.shape)
    obj = surrogate_objective(real, V, state.U, state.w, envelopes, cfg.qos_domain, kappa)
    if not obj >= warm:
        log.debug("precoder step did not improve (%.3e < %.3e); keeping warm start", obj, warm)
        return state.V.copy(), SubproblemInfo(warm, warm, steps, gap, True)
    return V, SubproblemInfo(obj, warm, steps, gap, False)


# ---------------------------------------------------------------------------
# main loop

def _envelopes(sets: list[list[RateSet]], dom: QosDomain) -> list[list[EnvelopeModel]]:
    cache: dict[RateSet, EnvelopeModel] = {}
    out = []
    for row in sets:
        out_row = []
        for rs in row:
            if rs not in cache:
                cache[rs] = build_envelope(rs, dom)
            out_row.append(cache[rs])
        out.append(out_row)
    return out


def _relative_change(new: float, old: float) -> float:
    if new == old:
        return 0.0
    return abs(new - old) / max(abs(old), abs(new), 1e-300)


def run(real: NetworkRealization, rate_sets: RateSets, cfg: BcdConfig = BcdConfig(),
        V0: Optional[np.ndarray] = None) -> BcdState:
    """Run the block coordinate descent until the surrogate objective
    settles.

    Each iteration updates receivers, weights and precoders in turn; the
    trace stores the surrogate objective after the precoder step along
    with the weighted discrete and continuous sum rates evaluated with
    MMSE receivers.
    """
    I, K, N, M, d = real.shape
    sets = per_user_rate_sets(rate_sets, I, K)
    envs = _envelopes(sets, cfg.qos_domain)
    kappa = cfg.kappa if cfg.kappa is not None else regularizer_kappa(sets, real.weights, real.power)
    V = initial_precoders(real) if V0 is None else np.array(V0, dtype=complex)
    state = BcdState(V=V, U=np.zeros((I, K, N, d), dtype=complex), w=np.ones((I, K, d)), kappa=kappa)
    dom = cfg.qos_domain

    def objective():
        return surrogate_objective(real, state.V, state.U, state.w, envs, dom, kappa)

    ev = evaluate_rates(real, state.V, sets)
    prev = None
    for it in range(1, cfg.max_iterations + 1):
        state.U = update_receivers(state, real)
        if it > 1:
            state.block_objectives.append(objective())
        state.w = update_weights(state, real, cfg.mse_floor)
        if prev is None:
            prev = objective()
            state.trace.append(IterationRecord(0, prev, ev.weighted_discrete, ev.weighted_continuous))
        state.block_objectives.append(objective())
        state.V, info = solve_precoder_subproblem(state, real, envs, kappa, cfg)
        state.fallbacks += info.fallback
        obj = info.objective
        state.block_objectives.append(obj)
        ev = evaluate_rates(real, state.V, sets)
        state.trace.append(IterationRecord(it, obj, ev.weighted_discrete, ev.weighted_continuous))
        state.iterations = it
        if _relative_change(obj, prev) < cfg.rel_tolerance:
            state.converged = True
            break
        prev = obj
    # leave receivers and weights consistent with the final precoders
    state.U = update_receivers(state, real)
    state.w = update_weights(state, real, cfg.mse_floor)
    return state

"""Benchmark designs: per-stream WMMSE, MaxSINR and TDMA with waterfilling."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .link_metrics import (RateEvaluation, RateSets, evaluate_rates, mmse_receivers,
                           rates_from_sinr, stream_mses)
from .network_model import NetworkRealization
from .rate_model import DomainError

__all__ = [
    "BaselineConfig",
    "BaselineResult",
    "waterfill",
    "wmmse_run",
    "maxsinr_run",
    "tdma_run",
    "TdmaResult",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BaselineConfig:
    wmmse_max_iterations: int = 500
    wmmse_rel_tolerance: float = 1e-3
    maxsinr_max_iterations: int = 100
    filter_change_tolerance: float = 1e-4
    bisection_tolerance: float = 1e-8

    def __post_init__(self):
        if self.wmmse_max_iterations < 1 or self.maxsinr_max_iterations < 1:
            raise ValueError("iteration caps must be >= 1")
        for v in (self.wmmse_rel_tolerance, self.filter_change_tolerance, self.bisection_tolerance):
            if not v > 0:
                raise ValueError("tolerances must be positive")


@dataclass
class BaselineResult:
    V: np.ndarray
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)   # WMMSE: weighted continuous sum rate


def waterfill(gains, P: float, noise: float) -> np.ndarray:
    """Power split ``p_k = max(0, mu - noise / g_k)`` with ``sum(p) = P``.

    The water level comes from the sorted active set: the ``n`` strongest
    channels are active when the level they imply clears the ``n``-th
    floor.
    """
    g = np.asarray(gains, dtype=float).reshape(-1)
    if g.size == 0:
        raise DomainError("no channels to waterfill")
    if np.any(~(g > 0)):
        raise DomainError("channel gains must be positive")
    if P < 0:
        raise DomainError("power must be nonnegative")
    order = np.argsort(-g, kind="stable")
    floors = noise / g[order]
    csum = np.cumsum(floors)
    n = np.arange(1, g.size + 1)
    levels = (P + csum) / n
    active = levels > floors
    n_act = int(np.flatnonzero(active)[-1]) + 1 if np.any(active) else 1
    mu = levels[n_act - 1]
    p = np.zeros_like(g)
    p[order[:n_act]] = np.maximum(mu - floors[:n_act], 0.0)
    return p


# ---------------------------------------------------------------------------
# WMMSE

def _direct(real: NetworkRealization) -> np.ndarray:
    I = real.H.shape[0]
    return real.H[np.arange(I), :, np.arange(I)]      # (I, K, N, M)


def _bisect_precoders(A: np.ndarray, Bm: np.ndarray, P: float, tol: float) -> np.ndarray:
    """Minimize ``tr(X^H A X) - 2 Re tr(B^H X)`` s.t. ``||X||_F^2 <= P`` via
    the multiplier ``mu``: ``X = (A + mu I)^{-1} B``."""
    lam, E = np.linalg.eigh(A)
    lam = np.maximum(lam, 0.0)
    C = np.abs(E.conj().T @ Bm) ** 2
    c = C.sum(axis=1)

    def power(mu):
        with np.errstate(divide="ignore"):
            return float(np.sum(c / (lam + mu) ** 2))

    def solution(mu):
        return E @ ((E.conj().T @ Bm) / (lam + mu)[:, None])

    if P <= 0:
        return np.zeros_like(Bm)
    if lam.min() > 1e-12 * max(lam.max(), 1e-300) and power(0.0) <= P:
        return solution(0.0)
    lo, hi = 0.0, math.sqrt(c.sum() / P) if c.sum() > 0 else 1.0
    grow = 0
    while power(hi) > P:
        hi *= 2.0
        grow += 1
        if grow > 200:
            log.warning("WMMSE bisection bracket failed to widen")
            break
    while hi - lo > 1e-15 * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if power(mid) > P:
            lo = mid
        else:
            hi = mid
        if abs(power(hi) - P) <= tol * P:
            break
    return solution(hi)


def _wmmse_precoders(real: NetworkRealization, U: np.ndarray, Wt: np.ndarray, tol: float) -> np.ndarray:
    I, K, N, M, d = real.shape
    V = np.zeros((I, K, M, d), dtype=complex)
    Hd = _direct(real)
    coef = real.weights[..., None] * Wt                 # (I, K, d)
    for i in range(I):
        # sum_{j,l,m} coef * H_{jl,i}^H u u^H H_{jl,i}
        G = np.einsum("jlam,jlan->jlmn", real.H[:, :, i].conj(), U)   # (I, K, M, d) = H^H u
        A = np.einsum("jlmn,jln,jlpn->mp", G, coef, G.conj())
        Bm = np.concatenate([(Hd[i, k].conj().T @ U[i, k]) * coef[i, k] for k in range(K)], axis=1)
        X = _bisect_precoders(A, Bm, real.power[i], tol)
        V[i] = np.moveaxis(X.reshape(M, K, d), 1, 0)
    return V


def wmmse_run(real: NetworkRealization, cfg: BaselineConfig = BaselineConfig(),
              V0: Optional[np.ndarray] = None, rate_sets: Optional[RateSets] = None) -> BaselineResult:
    """Per-stream weighted MMSE for the weighted continuous sum rate.

    Each round takes MMSE receivers, weights ``1 / e`` and the
    multiplier-regularized precoders that meet every BS budget.  The trace
    holds ``(objective, weighted discrete, weighted continuous)`` per
    iteration, the discrete column only when ``rate_sets`` is given.
    """
    from .envelope_bcd import initial_precoders

    V = initial_precoders(real) if V0 is None else np.array(V0, dtype=complex)
    omega = real.weights[..., None]
    trace = []
    prev = None
    converged = False
    it = 0
    for it in range(1, cfg.wmmse_max_iterations + 1):
        U = mmse_receivers(real, V)
        e = np.clip(stream_mses(real, V, U), 1e-300, 1.0)
        obj = float(np.sum(omega * -np.log2(e)))
        if prev is None:
            trace.append(_wmmse_row(real, V, obj, rate_sets))
        Wt = 1.0 / e
        V = _wmmse_precoders(real, U, Wt, cfg.bisection_tolerance)
        U = mmse_receivers(real, V)
        e = np.clip(stream_mses(real, V, U), 1e-300, 1.0)
        obj_new = float(np.sum(omega * -np.log2(e)))
        trace.append(_wmmse_row(real, V, obj_new, rate_sets))
        ref = obj if prev is None else prev
        if abs(obj_new - ref) <= cfg.wmmse_rel_tolerance * max(abs(ref), 1e-300) or obj_new == ref:
            converged = True
            break
        prev = obj_new
    return BaselineResult(V, it, converged, trace)


def _wmmse_row(real, V, obj, rate_sets):
    if rate_sets is None:
        return (obj, math.nan, obj)
    ev = evaluate_rates(real, V, rate_sets)
    return (obj, ev.weighted_discrete, ev.weighted_continuous)


# ---------------------------------------------------------------------------
# MaxSINR

def maxsinr_run(real: NetworkRealization, cfg: BaselineConfig = BaselineConfig(),
                V0: Optional[np.ndarray] = None) -> BaselineResult:
    """Alternating forward/reverse max-SINR filter updates.

    Every stream of BS ``i`` transmits with power ``P_i / (K d)``; in the
    reverse network the receive filters transmit with the same per-stream
    power over the conjugate-transposed channels.  There is no convergence
    guarantee, so the last iterate is returned at the cap.
    """
    from .envelope_bcd import initial_precoders

    I, K, N, M, d = real.shape
    V = initial_precoders(real) if V0 is None else np.array(V0, dtype=complex)
    pw = np.sqrt(real.power / (K * d))                   # per-stream amplitude
    V = _normalize_columns(V) * pw[:, None, None, None]
    U = None
    converged = False
    it = 0
    for it in range(1, cfg.maxsinr_max_iterations + 1):
        U_new = _forward_filters(real, V)
        V_new = _reverse_filters(real, U_new * pw[:, None, None, None]) * pw[:, None, None, None]
        change = float(np.max(np.abs(V_new - V))) / max(float(pw.max()), 1e-300)
        if U is not None:
            change = max(change, float(np.max(np.abs(U_new - U))))
        V, U = V_new, U_new
        if it > 1 and change < cfg.filter_change_tolerance:
            converged = True
            break
    return BaselineResult(V, it, converged)


def _normalize_columns(X: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(X, axis=-2, keepdims=True)
    return np.where(nrm > 0, X / np.where(nrm > 0, nrm, 1.0), 0.0)


def _forward_filters(real: NetworkRealization, V: np.ndarray) -> np.ndarray:
    # B^{-1} H v is parallel to Phi^{-1} H v: removing the stream's own
    # rank-one term from Phi only rescales the solution
    return _normalize_columns(mmse_receivers(real, V))


def _reverse_filters(real: NetworkRealization, Ur: np.ndarray) -> np.ndarray:
    """Unit-norm max-SINR precoders of the reverse network, where user
    ``(j, l)`` transmits ``Ur[j, l]`` to BS ``i`` over ``H_{jl,i}^H``."""
    I, K, N, M, d = real.shape
    G = np.einsum("jliam,jlan->jlimn", real.H.conj(), Ur)        # (I, K, I, M, d)
    T = np.einsum("jlimn,jlipn->imp", G, G.conj())                # (I, M, M)
    V = np.empty((I, K, M, d), dtype=complex)
    eye = np.eye(M)
    for i in range(I):
        for k in range(K):
            Phi = T[i] + real.noise[i, k] * eye
            V[i, k] = np.linalg.solve(Phi, G[i, k, i])
    return _normalize_columns(V)


# ---------------------------------------------------------------------------
# TDMA

@dataclass(frozen=True)
class TdmaResult:
    evaluation: RateEvaluation      # time-averaged rates
    slot_sinr: np.ndarray           # (I, K, d) in-slot SINR
    slots: int


def tdma_run(real: NetworkRealization, rate_sets: RateSets) -> TdmaResult:
    """One slot per user; in its slot the user alone gets its BS's full
    budget, waterfilled over the strongest singular modes of its direct
    channel.  Discrete rates are quantized per slot, then averaged."""
    I, K, N, M, d = real.shape
    sinr = np.zeros((I, K, d))
    for i in range(I):
        for k in range(K):
            s = np.linalg.svd(real.H[i, k, i], compute_uv=False)[:d]
            g = s ** 2
            ok = g > 0
            if np.any(ok) and real.power[i] > 0:
                p = np.zeros(d)
                p[ok] = waterfill(g[ok], float(real.power[i]), float(real.noise[i, k]))
                sinr[i, k] = g * p / real.noise[i, k]
    slots = I * K
    per_slot = rates_from_sinr(sinr, rate_sets, real.weights, real.power)
    frac = 1.0 / slots
    ev = RateEvaluation(
        sinr=sinr,
        discrete=per_slot.discrete * frac,
        continuous=per_slot.continuous * frac,
        user_discrete=per_slot.user_discrete * frac,
        user_continuous=per_slot.user_continuous * frac,
        weighted_discrete=per_slot.weighted_discrete * frac,
        weighted_continuous=per_slot.weighted_continuous * frac,
        power_used=real.power.copy(),
    )
    return TdmaResult(ev, sinr, slots)

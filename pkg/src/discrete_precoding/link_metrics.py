"""Per-stream SINR and MSE, MMSE receivers and rate evaluation.

Precoders are stored as ``V[i, k]`` of shape ``(I, K, M, d)`` and receive
filters as ``U[i, k]`` of shape ``(I, K, N, d)``.  Every symbol has unit
power, so the power of BS ``i`` is ``sum_k ||V[i, k]||_F^2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .network_model import NetworkRealization
from .rate_model import DomainError, RateSet, rate_from_sinr

__all__ = [
    "RateEvaluation",
    "per_user_rate_sets",
    "power_used",
    "rx_covariance",
    "rx_covariances",
    "cross_gains",
    "stream_sinr",
    "stream_mse",
    "stream_sinrs",
    "stream_mses",
    "mmse_receiver",
    "mmse_receivers",
    "rates_from_sinr",
    "evaluate_rates",
]

RateSets = Union[RateSet, Sequence[RateSet], Sequence[Sequence[RateSet]]]


def per_user_rate_sets(rate_sets: RateSets, I: int, K: int) -> list[list[RateSet]]:
    """Broadcast one rate set, a flat per-user list or a nested list to ``[i][k]``."""
    if isinstance(rate_sets, RateSet):
        return [[rate_sets] * K for _ in range(I)]
    flat = list(rate_sets)
    if flat and not isinstance(flat[0], RateSet):
        flat = [rs for row in flat for rs in row]
    if len(flat) != I * K:
        raise ValueError(f"need {I * K} rate sets, got {len(flat)}")
    return [flat[i * K:(i + 1) * K] for i in range(I)]


def power_used(V: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(V) ** 2, axis=(1, 2, 3))


def _tx_covariances(V: np.ndarray) -> np.ndarray:
    # sum_l V[j, l] V[j, l]^H, shape (I, M, M)
    return np.einsum("jlmd,jlnd->jmn", V, V.conj())


def rx_covariances(real: NetworkRealization, V: np.ndarray) -> np.ndarray:
    """Received covariance of every user, shape ``(I, K, N, N)``."""
    T = _tx_covariances(V)
    Phi = np.einsum("ikjam,jmn,ikjbn->ikab", real.H, T, real.H.conj())
    N = real.H.shape[3]
    return Phi + real.noise[..., None, None] * np.eye(N)


def rx_covariance(real: NetworkRealization, V: np.ndarray, i: int, k: int) -> np.ndarray:
    Phi = real.noise[i, k] * np.eye(real.H.shape[3], dtype=complex)
    for j in range(real.H.shape[0]):
        Hj = real.H[i, k, j]
        for l in range(V.shape[1]):
            HV = Hj @ V[j, l]
            Phi = Phi + HV @ HV.conj().T
    return Phi


def cross_gains(real: NetworkRealization, V: np.ndarray, U: np.ndarray) -> np.ndarray:
    """``C[i, k, n, j, l, m] = u_{ikn}^H H_{ik,j} v_{jlm}``."""
    UH = np.einsum("ikan,ikjam->iknjm", U.conj(), real.H)
    return np.einsum("iknjm,jlmp->iknjlp", UH, V)


def _desired(C: np.ndarray) -> np.ndarray:
    I, K, d = C.shape[:3]
    ii, kk, nn = np.meshgrid(np.arange(I), np.arange(K), np.arange(d), indexing="ij")
    return C[ii, kk, nn, ii, kk, nn]


def stream_sinrs(real: NetworkRealization, V: np.ndarray, U: np.ndarray) -> np.ndarray:
    """SINR of every stream, shape ``(I, K, d)``; zero where ``u = 0``."""
    C = cross_gains(real, V, U)
    P = np.abs(C) ** 2
    signal = _desired(P)
    total = P.sum(axis=(3, 4, 5))
    noise = real.noise[..., None] * np.sum(np.abs(U) ** 2, axis=2)
    denom = total - signal + noise
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr = np.where(denom > 0, signal / np.where(denom > 0, denom, 1.0), 0.0)
    return sinr


def stream_mses(real: NetworkRealization, V: np.ndarray, U: np.ndarray) -> np.ndarray:
    """MSE of every stream, shape ``(I, K, d)``."""
    C = cross_gains(real, V, U)
    interf = np.sum(np.abs(C) ** 2, axis=(3, 4, 5))
    noise = real.noise[..., None] * np.sum(np.abs(U) ** 2, axis=2)
    return 1.0 - 2.0 * _desired(C).real + interf + noise


def stream_sinr(u: np.ndarray, V: np.ndarray, real: NetworkRealization,
                i: int, k: int, n: int) -> float:
    u = np.asarray(u, dtype=complex).reshape(-1)
    if not np.any(u):
        raise DomainError("receive filter must be nonzero")
    signal = 0.0
    interf = 0.0
    for j in range(V.shape[0]):
        g = u.conj() @ real.H[i, k, j] @ V[j]     # (K, d)
        p = np.abs(g) ** 2
        if j == i:
            signal = p[k, n]
            p[k, n] = 0.0
        interf += p.sum()
    return float(signal / (interf + real.noise[i, k] * np.vdot(u, u).real))


def stream_mse(u: np.ndarray, V: np.ndarray, real: NetworkRealization,
               i: int, k: int, n: int) -> float:
    u = np.asarray(u, dtype=complex).reshape(-1)
    Phi = rx_covariance(real, V, i, k)
    direct = u.conj() @ real.H[i, k, i] @ V[i, k, :, n]
    return float(1.0 - 2.0 * direct.real + (u.conj() @ Phi @ u).real)


def _hpd_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(A)
    Y = np.linalg.solve(L, B)
    return np.linalg.solve(np.swapaxes(L, -1, -2).conj(), Y)


def mmse_receivers(real: NetworkRealization, V: np.ndarray) -> np.ndarray:
    """``U[i, k] = Phi_ik^{-1} H_{ik,i} V[i, k]`` for every user."""
    I = real.H.shape[0]
    Phi = rx_covariances(real, V)
    Hd = real.H[np.arange(I), :, np.arange(I)]   # (I, K, N, M)
    return _hpd_solve(Phi, Hd @ V)


def mmse_receiver(real: NetworkRealization, V: np.ndarray, i: int, k: int) -> np.ndarray:
    Phi = rx_covariance(real, V, i, k)
    return _hpd_solve(Phi, real.H[i, k, i] @ V[i, k])


@dataclass(frozen=True)
class RateEvaluation:
    sinr: np.ndarray                 # (I, K, d)
    discrete: np.ndarray             # (I, K, d)
    continuous: np.ndarray           # (I, K, d)
    user_discrete: np.ndarray        # (I, K)
    user_continuous: np.ndarray      # (I, K)
    weighted_discrete: float
    weighted_continuous: float
    power_used: np.ndarray           # (I,)

    def power_fraction(self, budget: np.ndarray) -> np.ndarray:
        budget = np.asarray(budget, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(budget > 0, self.power_used / np.where(budget > 0, budget, 1.0), 0.0)


def rates_from_sinr(sinr: np.ndarray, rate_sets: RateSets,
                    weights: np.ndarray, power: np.ndarray) -> RateEvaluation:
    I, K, d = sinr.shape
    sets = per_user_rate_sets(rate_sets, I, K)
    discrete = np.empty_like(sinr)
    for i in range(I):
        for k in range(K):
            discrete[i, k] = rate_from_sinr(sets[i][k], sinr[i, k])
    continuous = np.log2(1.0 + sinr)
    ud = discrete.sum(axis=-1)
    uc = continuous.sum(axis=-1)
    return RateEvaluation(sinr, discrete, continuous, ud, uc,
                          float(np.sum(weights * ud)), float(np.sum(weights * uc)),
                          np.asarray(power, dtype=float))


def evaluate_rates(real: NetworkRealization, V: np.ndarray, rate_sets: RateSets,
                   weights: Optional[np.ndarray] = None) -> RateEvaluation:
    """Rates of a precoder design under fresh MMSE receivers."""
    weights = real.weights if weights is None else np.asarray(weights, dtype=float)
    U = mmse_receivers(real, V)
    sinr = stream_sinrs(real, V, U)
    return rates_from_sinr(sinr, rate_sets, weights, power_used(V))

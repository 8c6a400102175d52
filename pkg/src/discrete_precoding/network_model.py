"""Corridor scenario, ITU-R InH large-scale fading and Rayleigh channels.

All channels of a network live in one array ``H[i, k, j]`` of shape
``(I, K, I, N, M)``: the channel from BS ``j`` to the ``k``-th user of
BS ``i``.  Powers are in mW.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .rate_model import DomainError

__all__ = [
    "ScenarioParams",
    "Geometry",
    "NetworkRealization",
    "dbm_to_mw",
    "mw_to_dbm",
    "default_noise_dbm",
    "place_scenario",
    "los_probability",
    "pathloss_db",
    "large_scale_gain",
    "draw_channels",
    "save_realization",
    "load_realization",
]


def dbm_to_mw(p_dbm):
    return 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def mw_to_dbm(p_mw):
    return 10.0 * np.log10(p_mw)


def default_noise_dbm(bandwidth_hz: float = 20e6, noise_figure_db: float = 9.0) -> float:
    """Thermal noise over the band: -174 dBm/Hz plus bandwidth and NF."""
    return -174.0 + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


@dataclass(frozen=True)
class ScenarioParams:
    corridor_length: float = 120.0
    corridor_width: float = 20.0
    n_bs: int = 3
    users_per_bs: int = 2
    bs_antennas: int = 4
    ms_antennas: int = 2
    streams: int = 2
    carrier_freq_ghz: float = 3.4
    noise_power_dbm: float = field(default_factory=default_noise_dbm)
    tx_power_dbm: float = 21.0
    user_weights: Optional[tuple[float, ...]] = None
    shadowing: bool = False
    min_distance: float = 3.0

    def __post_init__(self):
        counts = (self.n_bs, self.users_per_bs, self.bs_antennas, self.ms_antennas, self.streams)
        if any(int(c) != c or c < 1 for c in counts):
            raise ValueError("all counts must be integers >= 1")
        if self.streams > min(self.bs_antennas, self.ms_antennas):
            raise ValueError("streams must not exceed min(M, N)")
        for p in (self.noise_power_dbm, self.tx_power_dbm, self.carrier_freq_ghz,
                  self.corridor_length, self.corridor_width):
            if not math.isfinite(p):
                raise ValueError("scenario powers and sizes must be finite")
        if self.user_weights is not None:
            if len(self.user_weights) != self.n_bs * self.users_per_bs:
                raise ValueError("need one weight per user")
            object.__setattr__(self, "user_weights", tuple(float(w) for w in self.user_weights))

    @property
    def n_users(self) -> int:
        return self.n_bs * self.users_per_bs

    def weights(self) -> np.ndarray:
        if self.user_weights is None:
            return np.ones((self.n_bs, self.users_per_bs))
        return np.reshape(np.array(self.user_weights), (self.n_bs, self.users_per_bs))


@dataclass(frozen=True)
class Geometry:
    bs_xy: np.ndarray   # (I, 2)
    ms_xy: np.ndarray   # (I, K, 2)

    def distances(self) -> np.ndarray:
        """Distance ``[i, k, j]`` from BS ``j`` to user ``(i, k)``."""
        diff = self.ms_xy[:, :, None, :] - self.bs_xy[None, None, :, :]
        return np.linalg.norm(diff, axis=-1)


@dataclass(frozen=True)
class NetworkRealization:
    """Channels, noise powers, power budgets and user weights of one drop.

    Attributes
    ----------
    H : ndarray, complex, shape (I, K, I, N, M)
    noise : ndarray, shape (I, K)
        Noise power per user [mW].
    power : ndarray, shape (I,)
        Power budget per BS [mW].
    weights : ndarray, shape (I, K)
    streams : int
    """

    H: np.ndarray
    noise: np.ndarray
    power: np.ndarray
    weights: np.ndarray
    streams: int

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        if H.ndim != 5 or H.shape[0] != H.shape[2]:
            raise ValueError("H must have shape (I, K, I, N, M)")
        I, K, _, N, M = H.shape
        noise = np.broadcast_to(np.asarray(self.noise, dtype=float), (I, K)).copy()
        power = np.broadcast_to(np.asarray(self.power, dtype=float), (I,)).copy()
        weights = np.broadcast_to(np.asarray(self.weights, dtype=float), (I, K)).copy()
        if not np.all(np.isfinite(H)):
            raise ValueError("channels must be finite")
        if np.any(~(noise > 0)):
            raise ValueError("noise power must be positive")
        if np.any(~(power >= 0)) or np.any(~np.isfinite(power)):
            raise ValueError("power budgets must be finite and nonnegative")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if not 1 <= self.streams <= min(N, M):
            raise ValueError("streams must lie in [1, min(N, M)]")
        for name, val in (("H", H), ("noise", noise), ("power", power), ("weights", weights)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def shape(self) -> tuple[int, int, int, int, int]:
        """``(I, K, N, M, d)``."""
        I, K, _, N, M = self.H.shape
        return I, K, N, M, self.streams

    def with_power(self, power) -> "NetworkRealization":
        return NetworkRealization(self.H, self.noise, power, self.weights, self.streams)

    def with_weights(self, weights) -> "NetworkRealization":
        return NetworkRealization(self.H, self.noise, self.power, weights, self.streams)


def place_scenario(params: ScenarioParams, rng: np.random.Generator) -> Geometry:
    """BSs at segment midpoints of the corridor centre line, users uniform in
    their serving BS's segment."""
    L, W, I, K = params.corridor_length, params.corridor_width, params.n_bs, params.users_per_bs
    idx = np.arange(1, I + 1)
    bs_xy = np.stack([L * (2 * idx - 1) / (2 * I), np.full(I, W / 2)], axis=1)
    u = rng.random((I, K, 2))
    x0 = L * (idx - 1) / I
    ms_x = x0[:, None] + u[..., 0] * (L / I)
    ms_y = u[..., 1] * W
    return Geometry(bs_xy, np.stack([ms_x, ms_y], axis=-1))


def los_probability(dist):
    d = np.asarray(dist, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("distance must be positive")
    p = np.where(d <= 18.0, 1.0, np.where(d < 37.0, np.exp(-(d - 18.0) / 27.0), 0.5))
    return float(p) if p.ndim == 0 else p


def pathloss_db(dist, fc_ghz, los):
    """ITU-R InH pathloss [dB] (M.2135, Table A1-2)."""
    d = np.asarray(dist, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("distance must be positive")
    pl_los = 16.9 * np.log10(d) + 32.8 + 20.0 * np.log10(fc_ghz)
    pl_nlos = 43.3 * np.log10(d) + 11.5 + 20.0 * np.log10(fc_ghz)
    pl = np.where(los, pl_los, pl_nlos)
    return float(pl) if pl.ndim == 0 else pl


def large_scale_gain(geometry: Geometry, params: ScenarioParams, rng: np.random.Generator,
                     los: Optional[np.ndarray] = None) -> np.ndarray:
    """Linear power gain ``[i, k, j]``; LOS state drawn per link unless given."""
    d = np.maximum(geometry.distances(), params.min_distance)
    if los is None:
        los = rng.random(d.shape) < los_probability(d)
    pl = pathloss_db(d, params.carrier_freq_ghz, los)
    if params.shadowing:
        sigma = np.where(los, 3.0, 4.0)
        pl = pl + sigma * rng.standard_normal(d.shape)
    return 10.0 ** (-pl / 10.0)


def _rayleigh(rng: np.random.Generator, shape) -> np.ndarray:
    g = rng.standard_normal(shape + (2,))
    return (g[..., 0] + 1j * g[..., 1]) / math.sqrt(2.0)


def draw_channels(geometry: Geometry, params: ScenarioParams, rng: np.random.Generator,
                  tx_power_dbm: Optional[float] = None) -> NetworkRealization:
    I, K, N, M = params.n_bs, params.users_per_bs, params.ms_antennas, params.bs_antennas
    gain = large_scale_gain(geometry, params, rng)
    G = _rayleigh(rng, (I, K, I, N, M))
    H = np.sqrt(gain)[..., None, None] * G
    p_dbm = params.tx_power_dbm if tx_power_dbm is None else tx_power_dbm
    noise = np.full((I, K), float(dbm_to_mw(params.noise_power_dbm)))
    power = np.full(I, float(dbm_to_mw(p_dbm)))
    return NetworkRealization(H, noise, power, params.weights(), params.streams)


_MAGIC = b"DPNR"


def save_realization(real: NetworkRealization, path) -> None:
    """Write a realization: magic, header length, JSON header, then the
    channel as row-major little-endian float64 (re, im) pairs."""
    I, K, N, M, d = real.shape
    header = {
        "shape": [I, K, I, N, M],
        "streams": d,
        "noise": real.noise.tolist(),
        "power": real.power.tolist(),
        "weights": real.weights.tolist(),
    }
    raw = json.dumps(header, sort_keys=True).encode()
    pairs = np.stack([real.H.real, real.H.imag], axis=-1).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(pairs).tobytes())


def load_realization(path) -> NetworkRealization:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a realization file")
    (n,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8:8 + n])
    shape = tuple(header["shape"])
    pairs = np.frombuffer(data[8 + n:], dtype="<f8").reshape(shape + (2,))
    H = pairs[..., 0] + 1j * pairs[..., 1]
    return NetworkRealization(H, np.array(header["noise"]), np.array(header["power"]),
                              np.array(header["weights"]), header["streams"])

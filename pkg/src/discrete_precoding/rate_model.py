"""Discrete rate sets, QoS-domain maps and concave rate envelopes.

A stream can use rate ``q`` from its rate set only if its SINR reaches
``beta(q) = margin * (2**q - 1)``.  Under an MMSE receiver the MSE is
``e = 1 / (1 + SINR)``, so the discrete rate is a step function of ``e``.
That step function is bounded from above by the concave envelope of its
corner points, built in a chosen QoS domain ``eta(e)``.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "DomainError",
    "RateSet",
    "QosDomain",
    "EnvelopeModel",
    "WIFI_RATES",
    "LTE_RATES",
    "grid_rates",
    "preset_rate_set",
    "parse_rate_set",
    "required_sinr",
    "qos_map",
    "qos_derivative",
    "discrete_rate",
    "rate_from_sinr",
    "build_envelope",
    "envelope_value",
    "linearized_value",
]

RateLike = Union[str, int, float, Fraction, Decimal]


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


def to_fraction(x: RateLike) -> Fraction:
    """Exact decimal value of ``x`` (floats are read through ``repr``)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise DomainError(f"non-finite rate {x!r}")
        return Fraction(Decimal(repr(x)))
    if isinstance(x, (str, Decimal)):
        return Fraction(Decimal(x))
    return Fraction(x)


# IEEE 802.11ac and 3GPP LTE spectral efficiencies [bits/s/Hz]
WIFI_RATES = ("0", "0.5", "1", "1.5", "2", "3", "4", "4.5", "5", "6", "6.67")
LTE_RATES = ("0", "0.25", "0.4", "0.5", "0.67", "1", "1.33", "1.5", "1.6",
             "2", "2.67", "3", "3.2", "4", "4.5", "4.8")


def grid_rates(q_max: int) -> tuple[str, ...]:
    """Integer rate grid ``{0, 1, ..., q_max}``."""
    if q_max < 1:
        raise DomainError("q_max must be at least 1")
    return tuple(str(q) for q in range(q_max + 1))


@dataclass(frozen=True)
class RateSet:
    """Ordered discrete rates (exact decimals) with an SINR margin.

    Parameters
    ----------
    rates : tuple of Fraction
        Strictly increasing spectral efficiencies, starting at zero.
    margin : float
        Implementation margin (SINR gap) in linear scale, at least 1.
    """

    rates: tuple[Fraction, ...]
    margin: float = 1.0

    def __post_init__(self):
        rates = tuple(to_fraction(q) for q in self.rates)
        object.__setattr__(self, "rates", rates)
        if not rates or rates[0] != 0:
            raise DomainError("rate set must start with the zero rate")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise DomainError("rates must be strictly increasing")
        if not (math.isfinite(self.margin) and self.margin >= 1.0):
            raise DomainError(f"margin must be >= 1, got {self.margin}")
        object.__setattr__(self, "margin", float(self.margin))

    @classmethod
    def from_values(cls, values: Iterable[RateLike], margin: float = 1.0) -> "RateSet":
        return cls(tuple(to_fraction(v) for v in values), margin)

    @property
    def values(self) -> np.ndarray:
        return np.array([float(q) for q in self.rates])

    @property
    def max_rate(self) -> float:
        return float(self.rates[-1])

    @property
    def thresholds(self) -> np.ndarray:
        """Required SINR for every rate, increasing."""
        return self.margin * (np.exp2(self.values) - 1.0)

    @property
    def mse_thresholds(self) -> np.ndarray:
        """Largest MSE at which each rate is still achievable, decreasing."""
        return 1.0 / (1.0 + self.thresholds)

    def __len__(self) -> int:
        return len(self.rates)


def preset_rate_set(name: str, margin: float = 1.0) -> RateSet:
    """Named rate set: ``"wifi"``, ``"lte"`` or ``"grid(q_max)"``."""
    key = name.strip().lower()
    if key == "wifi":
        return RateSet.from_values(WIFI_RATES, margin)
    if key == "lte":
        return RateSet.from_values(LTE_RATES, margin)
    m = re.fullmatch(r"grid\s*[(:]\s*(\d+)\s*\)?", key)
    if m:
        return RateSet.from_values(grid_rates(int(m.group(1))), margin)
    raise DomainError(f"unknown rate set preset {name!r}")


def parse_rate_set(spec: Union[str, Sequence[RateLike]], margin: float = 1.0,
                   margin_db: bool = False) -> RateSet:
    """Rate set from a preset name or an explicit list of decimals.

    A string holding commas is read as an explicit list, e.g. ``"0, 1, 2"``.
    """
    if margin_db:
        margin = 10.0 ** (margin / 10.0)
    if isinstance(spec, str):
        if "," in spec:
            return RateSet.from_values([s.strip() for s in spec.split(",") if s.strip()], margin)
        return preset_rate_set(spec, margin)
    return RateSet.from_values(spec, margin)


class QosDomain(enum.Enum):
    """Concave, strictly increasing reparameterization of the MSE."""

    MSE = "mse"
    CONTINUOUS_RATE = "rate"
    SINR = "sinr"

    @classmethod
    def parse(cls, name: Union[str, "QosDomain"]) -> "QosDomain":
        if isinstance(name, QosDomain):
            return name
        key = name.strip().lower().replace("-", "_")
        aliases = {"mse": cls.MSE, "rate": cls.CONTINUOUS_RATE,
                   "continuous_rate": cls.CONTINUOUS_RATE, "continuousrate": cls.CONTINUOUS_RATE,
                   "log": cls.CONTINUOUS_RATE, "sinr": cls.SINR}
        try:
            return aliases[key]
        except KeyError:
            raise DomainError(f"unknown QoS domain {name!r}") from None

    def eta(self, e):
        e = np.asarray(e, dtype=float)
        if self is QosDomain.MSE:
            return e.copy() if e.ndim else float(e)
        if self is QosDomain.CONTINUOUS_RATE:
            return np.log2(e)
        return 1.0 - 1.0 / e

    def derivative(self, e):
        e = np.asarray(e, dtype=float)
        if self is QosDomain.MSE:
            return np.ones_like(e) if e.ndim else 1.0
        if self is QosDomain.CONTINUOUS_RATE:
            return 1.0 / (e * math.log(2.0))
        return 1.0 / (e * e)

    def threshold(self, rs: RateSet) -> np.ndarray:
        """``eta(1 / (1 + beta(q)))`` for every rate of ``rs``.

        The rate domain is evaluated as ``-log2(1 + beta)`` in a factored
        form that returns exactly ``-q`` when the margin is one.
        """
        q = rs.values
        if self is QosDomain.MSE:
            return rs.mse_thresholds
        if self is QosDomain.CONTINUOUS_RATE:
            return -(q + np.log2(rs.margin + (1.0 - rs.margin) * np.exp2(-q)))
        return -rs.thresholds


def _check_mse(e) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    if np.any(~(e > 0.0)) or np.any(e > 1.0):
        raise DomainError("MSE must lie in (0, 1]")
    return e


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def required_sinr(rs: RateSet, q: RateLike) -> float:
    """Minimum SINR ``margin * (2**q - 1)`` for rate ``q`` of the set."""
    qf = to_fraction(q)
    if qf not in rs.rates:
        raise DomainError(f"rate {q} is not in the rate set")
    if qf == 0:
        return 0.0
    return rs.margin * (2.0 ** float(qf) - 1.0)


def qos_map(dom: QosDomain, e) -> float:
    return _scalar(dom.eta(_check_mse(e)))


def qos_derivative(dom: QosDomain, e) -> float:
    return _scalar(dom.derivative(_check_mse(e)))


def discrete_rate(rs: RateSet, e):
    """Largest rate whose MSE threshold is not exceeded by ``e``.

    Achievability is inclusive: ``e == 1 / (1 + beta(q))`` still yields ``q``.
    """
    e = _check_mse(e)
    n_ok = np.sum(e[..., None] <= rs.mse_thresholds, axis=-1)
    # rate 0 has threshold 1, so n_ok >= 1 on the checked domain
    return _scalar(rs.values[n_ok - 1])


def rate_from_sinr(rs: RateSet, sinr):
    """Largest rate ``q`` with ``beta(q) <= sinr``."""
    s = np.asarray(sinr, dtype=float)
    n_ok = np.sum(s[..., None] >= rs.thresholds, axis=-1)
    n_ok = np.maximum(n_ok, 1)
    return _scalar(rs.values[n_ok - 1])


@dataclass(frozen=True)
class EnvelopeModel:
    """Concave piecewise-linear majorant ``min_p(c_p * eta(e) + m_p)``.

    ``slopes[0] == 0`` is the saturation piece at the top rate; the rest
    follow the upper hull from high to low rates with decreasing slope.
    """

    slopes: tuple[float, ...]
    offsets: tuple[float, ...]
    domain: QosDomain
    vertices: tuple[tuple[float, float], ...] = ()

    @property
    def pieces(self) -> list[tuple[float, float]]:
        return list(zip(self.slopes, self.offsets))

    @property
    def slope_array(self) -> np.ndarray:
        return np.array(self.slopes)

    @property
    def offset_array(self) -> np.ndarray:
        return np.array(self.offsets)

    def __call__(self, x):
        """Envelope in the eta coordinate."""
        x = np.asarray(x, dtype=float)
        return _scalar(np.min(self.slope_array * x[..., None] + self.offset_array, axis=-1))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def upper_hull(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Upper hull of 2-D points, left to right (monotone chain).

    Collinear points are dropped; of points sharing an x only the highest
    is kept.
    """
    best: dict[float, float] = {}
    for x, y in points:
        if x not in best or y > best[x]:
            best[x] = y
    hull: list[tuple[float, float]] = []
    for p in sorted(best.items()):
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) >= 0.0:
            hull.pop()
        hull.append(p)
    return hull


def build_envelope(rs: RateSet, dom: QosDomain) -> EnvelopeModel:
    xs = dom.threshold(rs)
    hull = upper_hull(zip(xs.tolist(), rs.values.tolist()))
    slopes = [0.0]
    offsets = [rs.max_rate]
    for (x0, y0), (x1, y1) in zip(hull, hull[1:]):
        c = (y1 - y0) / (x1 - x0)
        slopes.append(c)
        offsets.append(y0 - c * x0)
    offsets = _lift_offsets(np.array(slopes), np.array(offsets), xs, rs.values)
    return EnvelopeModel(tuple(slopes), tuple(offsets.tolist()), dom, tuple(hull))


def _lift_offsets(c: np.ndarray, m: np.ndarray, xs: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Raise offsets just enough that every piece clears every rate point
    in floating point, so majorization holds without tolerance."""
    m = np.maximum(m, np.max(q[:, None] - c * xs[:, None], axis=0))
    for _ in range(8):
        low = np.any(c * xs[:, None] + m < q[:, None], axis=0)
        if not low.any():
            break
        m[low] = np.nextafter(m[low], np.inf)
    return m


def envelope_value(env: EnvelopeModel, dom: QosDomain, e):
    e = _check_mse(e)
    return env(dom.eta(e))


def linearized_value(env: EnvelopeModel, dom: QosDomain, e, w):
    """Envelope with ``eta`` replaced by its tangent at ``1 / w``.

    Never exceeds :func:`envelope_value` because every slope is nonpositive
    and ``eta`` is concave; equal to it when ``w == 1 / e``.
    """
    e = _check_mse(e)
    w = np.asarray(w, dtype=float)
    if np.any(~(w >= 1.0)) or np.any(~np.isfinite(w)):
        raise DomainError("linearization weight must be finite and >= 1")
    z = 1.0 / w
    if dom is QosDomain.MSE:
        x = e
    else:
        x = dom.eta(z) + dom.derivative(z) * (e - z)
    return env(x)

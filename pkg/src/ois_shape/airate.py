"""Achievable information rates over ``Y = X + Z`` with Gaussian ``Z``.

Rates are in bits per channel use. SNR is the optical SNR ``E / sigma``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr, logsumexp

from .constellation import Constellation, db_to_linear
from .errors import DomainError, NumericalError

LOG2E = 1.0 / math.log(2.0)


class Method(str, enum.Enum):
    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte_carlo"
    CLOSED_FORM = "closed_form"


@dataclass(frozen=True)
class RatePoint:
    snr_db: float
    rate_bits: float
    method: Method
    mc_std_error: float | None = None

    def __post_init__(self):
        if (self.method is Method.MONTE_CARLO) != (self.mc_std_error is not None):
            raise DomainError("only Monte-Carlo points carry a standard error")


@dataclass(frozen=True)
class QuadratureConfig:
    node_count: int = 129
    tail_sigmas: float = 10.0
    rel_tolerance: float = 1e-8
    max_node_count: int = 2**16 + 1

    def __post_init__(self):
        if self.node_count < 3 or self.node_count % 2 == 0:
            raise DomainError("node_count must be odd and >= 3")
        if not self.tail_sigmas > 0 or not self.rel_tolerance > 0:
            raise DomainError("tail_sigmas and rel_tolerance must be positive")


def gaussian_loglik(y, levels, sigma: float) -> np.ndarray:
    """Natural-log densities ``log N(y; a_i, sigma^2)``, shape ``y.shape + (M,)``."""
    y = np.asarray(y, dtype=float)[..., None]
    a = np.asarray(levels, dtype=float)
    return -0.5 * ((y - a) / sigma) ** 2 - math.log(math.sqrt(2.0 * math.pi) * sigma)


def output_logpdf_discrete(y, c: Constellation, sigma: float) -> np.ndarray:
    """``log p(y)`` for equiprobable input on ``c``."""
    return logsumexp(gaussian_loglik(y, c.levels, sigma), axis=-1) - math.log(c.m_size)


def _simpson(values: np.ndarray, h: float) -> np.ndarray:
    # composite Simpson along the last axis; odd number of nodes
    return h / 3.0 * (values[..., 0] + values[..., -1]
                      + 4.0 * values[..., 1:-1:2].sum(axis=-1)
                      + 2.0 * values[..., 2:-1:2].sum(axis=-1))


def _mi_integral(delta: np.ndarray, nodes: int, tail: float) -> float:
    # delta[i, j] = (a_i - a_j) / sigma. For symbol i, with y = a_i + sigma t,
    # log p(y|a_i)/p(y) = log M - logsumexp_j(-t delta_ij - delta_ij^2 / 2).
    t = np.linspace(-tail, tail, nodes)
    h = t[1] - t[0]
    weight = np.exp(-0.5 * t**2) / math.sqrt(2.0 * math.pi)
    m = delta.shape[0]
    total = 0.0
    for i in range(m):
        d = delta[i]
        expo = -np.outer(t, d) - 0.5 * d**2
        info = math.log(m) - logsumexp(expo, axis=1)
        total += float(_simpson(weight * info, h))
    return total / m * LOG2E


def mi_discrete(c: Constellation, sigma: float, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """Mutual information of equiprobable input on ``c`` in bits.

    Each symbol's expectation is integrated over ``a_i +- tail_sigmas*sigma``
    (the union of these windows covers the full output range) with composite
    Simpson, doubling the node count until successive estimates agree to
    ``rel_tolerance``.
    """
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    a = c.levels
    delta = (a[:, None] - a[None, :]) / sigma
    nodes = cfg.node_count
    prev = _mi_integral(delta, nodes, cfg.tail_sigmas)
    history = [prev]
    while True:
        nodes = 2 * nodes - 1
        if nodes > cfg.max_node_count:
            raise NumericalError(
                f"mi_discrete did not converge: M={c.m_size}, sigma={sigma:g}, "
                f"last estimates {history[-3:]}"
            )
        cur = _mi_integral(delta, nodes, cfg.tail_sigmas)
        history.append(cur)
        if abs(cur - prev) <= cfg.rel_tolerance * max(abs(cur), 1e-12):
            break
        prev = cur
    return min(max(cur, 0.0), math.log2(c.m_size))


def mi_discrete_mc(c: Constellation, sigma: float, sample_count: int = 10**6, seed: int = 0,
                   chunk: int = 2**16) -> tuple[float, float]:
    """Monte-Carlo estimate of :func:`mi_discrete` and its standard error."""
    if sample_count < 10**4:
        raise DomainError("sample_count must be at least 1e4")
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    rng = np.random.default_rng(seed)
    m = c.m_size
    s1 = 0.0
    s2 = 0.0
    done = 0
    while done < sample_count:
        n = min(chunk, sample_count - done)
        idx = rng.integers(0, m, size=n)
        y = c.levels[idx] + sigma * rng.standard_normal(n)
        ll = gaussian_loglik(y, c.levels, sigma)
        info = (math.log(m) + ll[np.arange(n), idx] - logsumexp(ll, axis=1)) * LOG2E
        s1 += float(info.sum())
        s2 += float((info**2).sum())
        done += n
    mean = s1 / sample_count
    var = max(s2 / sample_count - mean**2, 0.0)
    return mean, math.sqrt(var / (sample_count - 1))


def output_logpdf_exponential(y, energy: float, sigma: float):
    """Log-density of exponential(mean=energy) plus N(0, sigma^2)."""
    if not (energy > 0 and sigma > 0):
        raise DomainError("energy and sigma must be positive")
    y = np.asarray(y, dtype=float)
    return (-math.log(energy) + sigma**2 / (2.0 * energy**2) - y / energy
            + log_ndtr(y / sigma - sigma / energy))


def output_pdf_exponential(y, energy: float, sigma: float):
    return np.exp(output_logpdf_exponential(y, energy, sigma))


def _exp_support(energy: float, sigma: float, floor: float = 1e-15) -> tuple[float, float]:
    # grow both limits geometrically until the density is below ``floor``
    log_floor = math.log(floor)
    lo = -sigma
    while output_logpdf_exponential(lo, energy, sigma) > log_floor:
        lo *= 2.0
    hi = energy + sigma
    while output_logpdf_exponential(hi, energy, sigma) > log_floor:
        hi *= 2.0
    return lo, hi


def air_exponential(energy: float, sigma: float, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """``h(Y) - h(Z)`` in bits for exponentially distributed input."""
    if not (energy > 0 and sigma > 0):
        raise DomainError("energy and sigma must be positive")
    lo, hi = _exp_support(energy, sigma)

    def integrand(y):
        lp = output_logpdf_exponential(y, energy, sigma)
        return -math.exp(lp) * lp

    # the density bends on a scale of sigma near zero and energy beyond
    cuts = sorted({lo, min(-5 * sigma, 0.0), 0.0, min(5 * sigma, hi), min(energy, hi), hi})
    cuts = [x for x in cuts if lo <= x <= hi]
    h_y = 0.0
    err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b <= a:
                continue
            try:
                val, e = integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=cfg.rel_tolerance, limit=200)
            except integrate.IntegrationWarning as exc:
                raise NumericalError(f"h(Y) integral on [{a:g}, {b:g}] failed: {exc}") from exc
            h_y += val
            err += e
    if err > 1e3 * cfg.rel_tolerance * max(abs(h_y), 1.0):
        raise NumericalError(f"h(Y) error estimate {err:g} too large")
    h_z = 0.5 * math.log(2.0 * math.pi * math.e * sigma**2)
    return max((h_y - h_z) * LOG2E, 0.0)


def capacity_upper(snr: float) -> float:
    """Upper bound 0.5*log2((e/2pi)(snr+2)^2) on capacity, bits."""
    if snr < 0:
        raise DomainError(f"snr must be nonnegative, got {snr}")
    return 0.5 * math.log2(math.e / (2.0 * math.pi) * (snr + 2.0) ** 2)


def high_snr_asymptote(snr: float) -> float:
    """0.5*log2((e/2pi) snr^2), the large-SNR capacity behaviour."""
    if not snr > 0:
        raise DomainError(f"snr must be positive, got {snr}")
    return 0.5 * math.log2(math.e / (2.0 * math.pi) * snr**2)


def snr_at_rate(points, target_rate: float) -> float:
    """SNR (dB) at which a rate curve reaches ``target_rate``.

    Linear interpolation between the two grid points that bracket the target.
    """
    pts = sorted(points, key=lambda p: p.snr_db)
    if len(pts) < 2:
        raise DomainError("need at least two points")
    snr = np.array([p.snr_db for p in pts])
    rate = np.array([p.rate_bits for p in pts])
    if not (rate[0] <= target_rate <= rate[-1]):
        raise DomainError(f"target rate {target_rate} outside [{rate[0]}, {rate[-1]}]")
    # monotone envelope guards against quadrature noise on saturated plateaus
    rate = np.maximum.accumulate(rate)
    k = int(np.searchsorted(rate, target_rate, side="left"))
    if rate[k] == target_rate:
        return float(snr[k])
    r0, r1 = rate[k - 1], rate[k]
    return float(snr[k - 1] + (target_rate - r0) / (r1 - r0) * (snr[k] - snr[k - 1]))


def gain_db(curve_a, curve_b, target_rate: float) -> float:
    """Horizontal gap ``snr_a - snr_b`` at ``target_rate``; positive when b is better."""
    return snr_at_rate(curve_a, target_rate) - snr_at_rate(curve_b, target_rate)


def rate_curve(c: Constellation, snr_db_grid, cfg: QuadratureConfig = QuadratureConfig()) -> list[RatePoint]:
    """Quadrature rates of ``c`` (rescaled to unit mean) over an SNR grid."""
    unit = c.scaled_to(1.0)
    return [RatePoint(float(s), mi_discrete(unit, 1.0 / db_to_linear(s), cfg), Method.QUADRATURE)
            for s in snr_db_grid]


def exp_curve(snr_db_grid, cfg: QuadratureConfig = QuadratureConfig()) -> list[RatePoint]:
    return [RatePoint(float(s), air_exponential(1.0, 1.0 / db_to_linear(s), cfg), Method.QUADRATURE)
            for s in snr_db_grid]


def required_snr_db(c: Constellation, target_rate: float, lo_db: float = -10.0, hi_db: float = 60.0,
                    cfg: QuadratureConfig = QuadratureConfig(), xtol: float = 1e-6) -> float:
    """SNR (dB) at which ``c`` reaches ``target_rate``, by root bracketing."""
    from scipy.optimize import brentq

    if not 0 < target_rate < math.log2(c.m_size):
        raise DomainError("target rate must lie strictly inside (0, log2 M)")
    unit = c.scaled_to(1.0)
    return float(brentq(lambda s: mi_discrete(unit, 1.0 / db_to_linear(s), cfg) - target_rate,
                        lo_db, hi_db, xtol=xtol))


def sweep_csv(snr_db_grid, columns: dict[str, list]) -> str:
    """CSV with header ``snr_db,r_pam,r_shaped,i_exp,c_upper,c_asymptote``.

    ``columns`` maps column names to per-point values; missing columns or
    ``None`` entries are written as empty fields.
    """
    names = ["r_pam", "r_shaped", "i_exp", "c_upper", "c_asymptote"]
    unknown = set(columns) - set(names)
    if unknown:
        raise DomainError(f"unknown columns {sorted(unknown)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["snr_db", *names])
    for k, s in enumerate(snr_db_grid):
        row = [repr(float(s))]
        for name in names:
            vals = columns.get(name)
            v = None if vals is None else vals[k]
            row.append("" if v is None else repr(float(v)))
        w.writerow(row)
    return buf.getvalue()

"""Cone probabilities in momentum space and in position space.

The momentum side is ``int_C |psi_hat(v)|^2 d^3v``; the position side is
``int_{C, |x| > r_min} |psi_t(x)|^2 d^3x``. Both are computed in polar
coordinates about the origin with a composite Gauss-Legendre rule in the
radius and the cap product rule in angle. Radial windows follow the
packet: components are Gaussians of known centre and spread in both
representations, so eight standard deviations on either side bound the
neglected mass far below 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import Cone, cap_quadrature
from .quadrature import composite_gauss_legendre
from .wavepacket import _scaled_sum, _evolved_terms

TAIL_SIGMAS = 8.0


@dataclass(frozen=True)
class RadialSpec:
    """Composite Gauss-Legendre radial rule: panel width is ``spread / panels_per_spread``."""

    nodes_per_panel: int = 8
    panels_per_spread: float = 2.0
    angular_order: int = 64


@dataclass(frozen=True)
class ConeProbabilityResult:
    value: float
    quad_error: float
    description: str
    cone: Cone | None = None


@dataclass(frozen=True)
class SictRow:
    t: float
    value: float
    momentum_value: float
    gap: float


def momentum_spreads(packet):
    """Per-component standard deviation of the momentum density along one axis."""
    return 1.0 / (2.0 * packet.widths)


def momentum_window(packet):
    """Speed interval that carries all but a negligible part of |psi_hat|^2."""
    k = np.linalg.norm(packet.wavevectors, axis=1)
    s = momentum_spreads(packet)
    lo = max(0.0, float(np.min(k - TAIL_SIGMAS * s)))
    hi = float(np.max(k + TAIL_SIGMAS * s))
    return lo, hi, float(np.min(s))


def position_window(packet, t):
    """Radial interval holding |psi_t|^2 (centres move ballistically, widths spread)."""
    sig = packet.widths
    centres = np.linalg.norm(packet.centers + packet.wavevectors * t, axis=1)
    spread = np.sqrt(sig ** 2 + (t / (2.0 * sig)) ** 2)
    lo = max(0.0, float(np.min(centres - TAIL_SIGMAS * spread)))
    hi = float(np.max(centres + TAIL_SIGMAS * spread))
    return lo, hi, float(np.min(spread))


def _radial_rule(lo, hi, spread, spec, coarse=False):
    if hi <= lo:
        return np.zeros(0), np.zeros(0)
    panels = max(1, math.ceil((hi - lo) / spread * spec.panels_per_spread))
    if coarse:
        panels = max(1, panels // 2)
    return composite_gauss_legendre(lo, hi, spec.nodes_per_panel, panels)


def _polar_integral(density, cone, radii, r_weights, order, chunk=16):
    """sum over radii r^2 w_r * sum over cap nodes w * density(r * direction)."""
    rule = cap_quadrature(cone, order)
    total = 0.0
    for start in range(0, len(radii), chunk):
        r = radii[start:start + chunk]
        pts = r[:, None, None] * rule.directions[None, :, :]
        dens = density(pts)
        total += float(np.sum((r_weights[start:start + chunk] * r * r)
                              * (dens @ rule.weights)))
    return total


def _momentum_density_fn(packet):
    def density(pts):
        value, _, m = _scaled_sum(*packet._fourier_terms, pts, with_grad=False)
        return np.abs(value) ** 2 * np.exp(2.0 * m)
    return density


def _position_density_fn(packet, t):
    terms = _evolved_terms(packet, float(t))

    def density(pts):
        value, _, m = _scaled_sum(*terms, pts, with_grad=False)
        return np.abs(value) ** 2 * np.exp(2.0 * m)
    return density


def momentum_cone_probability(packet, cone, radial_spec=None):
    """Probability that the momentum lies in ``cone``.

    ``quad_error`` is the change against a rule with half the radial
    panels and half the angular order.
    """
    spec = radial_spec or RadialSpec()
    lo, hi, spread = momentum_window(packet)
    density = _momentum_density_fn(packet)
    fine = _polar_integral(density, cone, *_radial_rule(lo, hi, spread, spec), spec.angular_order)
    coarse = _polar_integral(density, cone, *_radial_rule(lo, hi, spread, spec, coarse=True),
                             max(2, spec.angular_order // 2))
    return ConeProbabilityResult(fine, abs(fine - coarse), "momentum", cone)


def momentum_ball_probability(packet, speed, angular_order=32):
    """P(|p| < speed) under |psi_hat|^2."""
    if speed <= 0:
        return 0.0
    _, hi, spread = momentum_window(packet)
    upper = min(float(speed), hi)
    radii, weights = composite_gauss_legendre(0.0, upper, 8, max(1, math.ceil(2 * upper / spread)))
    return _polar_integral(_momentum_density_fn(packet), Cone.full(), radii, weights, angular_order)


@lru_cache(maxsize=256)
def _speed_quantile(packet, level, rel_precision):
    lo, hi = 0.0, momentum_window(packet)[1]
    while hi - lo > rel_precision * max(hi, 1e-12):
        mid = 0.5 * (lo + hi)
        if momentum_ball_probability(packet, mid) <= level:
            lo = mid
        else:
            hi = mid
    return lo


def slow_speed_cutoff(packet, epsilon):
    """Largest speed v (to ~1e-3 relative) with P(|p| < v) <= epsilon, and that probability."""
    v = _speed_quantile(packet, float(epsilon), 1e-3)
    return v, momentum_ball_probability(packet, v)


def median_speed(packet):
    return _speed_quantile(packet, 0.5, 1e-4)


def position_cone_probability(packet, cone, t, r_min=0.0, radial_spec=None):
    """Probability of finding the particle in ``cone`` beyond radius ``r_min`` at time ``t``."""
    if t < 0:
        raise ValueError("position_cone_probability needs t >= 0")
    if r_min < 0:
        raise ValueError("r_min must be nonnegative")
    spec = radial_spec or RadialSpec()
    lo, hi, spread = position_window(packet, float(t))
    lo = max(lo, float(r_min))
    density = _position_density_fn(packet, t)
    fine = _polar_integral(density, cone, *_radial_rule(lo, hi, spread, spec), spec.angular_order)
    coarse = _polar_integral(density, cone, *_radial_rule(lo, hi, spread, spec, coarse=True),
                             max(2, spec.angular_order // 2))
    return ConeProbabilityResult(fine, abs(fine - coarse), f"t={t:g}, r_min={r_min:g}", cone)


def sict_convergence_scan(packet, cone, times, radial_spec=None):
    """Position probability of ``cone`` at each time against the momentum value."""
    target = momentum_cone_probability(packet, cone, radial_spec).value
    rows = []
    for t in times:
        value = position_cone_probability(packet, cone, float(t), 0.0, radial_spec).value
        rows.append(SictRow(float(t), value, target, abs(value - target)))
    return rows

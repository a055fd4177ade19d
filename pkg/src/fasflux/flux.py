"""Quantum probability flux through distant spheres and caps.

Surface integrals use the cap product rule (``dsigma = R^2 dOmega``); time
integrals use adaptive Gauss-Kronrod. The open upper time limit is cut at
``T_max = R / v_min`` where ``v_min`` is the speed below which the packet
carries at most ``epsilon_tail`` of its momentum probability: a particle
reaching the sphere after ``T_max`` must be that slow, so the dropped
part is bounded by the reported ``tail_bound``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .conescan import (RadialSpec, _momentum_density_fn, _polar_integral, _radial_rule,
                       momentum_window, slow_speed_cutoff)
from .geometry import Cone, SphereCap, cap_quadrature
from .quadrature import UnconvergedError, adaptive_gauss_kronrod, composite_gauss_legendre
from .wavepacket import (_check_positive_time, chirped_fourier, fourier, fourier_gradient,
                         scaled_state)

DEFAULT_ORDER = 64


@dataclass(frozen=True)
class FluxIntegralResult:
    signed: float
    absolute: float
    R: float
    time_window: tuple
    tail_bound: float
    quad_error: float

    def __post_init__(self):
        # positive weights everywhere keep this exact, up to rounding
        if self.absolute < abs(self.signed) - 1e-12 * max(1.0, self.absolute):
            raise AssertionError("absolute flux below |signed flux|")


@dataclass(frozen=True)
class RemainderDiagnostics:
    c_f: float
    c_g: float
    sup_f_sampled: float
    sup_g_sampled: float
    cross_term_decay: list
    l1_psi: float
    l1_ypsi: float
    samples: int = 0
    violations_f: int = 0
    violations_g: int = 0


def flux_vector(packet, x, t):
    """j = Im(psi_t^* grad psi_t) at points ``x`` of shape (..., 3)."""
    psi, grad, m = scaled_state(packet, x, t)
    return np.imag(np.conj(psi)[..., None] * grad) * np.exp(2.0 * m)[..., None]


def asymptotic_flux(packet, x, t):
    """t^-3 |psi_hat(x/t)|^2 x/t, purely radial by construction."""
    t = _check_positive_time(t)
    x = np.asarray(x, dtype=float)
    v = x / t[..., None]
    return (t ** -3 * np.abs(fourier(packet, v)) ** 2)[..., None] * v


def sphere_rule(packet, order=DEFAULT_ORDER):
    """Full-sphere rule with its pole along the packet's mean momentum."""
    k = packet.mean_wavevector()
    axis = k if np.linalg.norm(k) > 0 else (0.0, 0.0, 1.0)
    return cap_quadrature(Cone.full(axis), order)


def _normal_flux(packet, R, directions, ts):
    """j.n on the sphere of radius R for every (time, direction) pair."""
    ts = np.asarray(ts, dtype=float)
    pts = R * directions
    psi, grad, m = scaled_state(packet, pts, ts[..., None])
    jn = np.imag(np.conj(psi) * np.einsum("...i,...i->...", grad, directions))
    return jn * np.exp(2.0 * m)


def surface_flux(packet, cap, t, rule=None):
    """(signed, absolute) flux through ``cap`` at time ``t``."""
    rule = rule or cap_quadrature(cap, DEFAULT_ORDER)
    jn = _normal_flux(packet, cap.radius, rule.directions, t)
    area = cap.radius ** 2
    return float(area * (jn @ rule.weights)), float(area * (np.abs(jn) @ rule.weights))


def _flux_integrand(packet, cap, rule):
    area = cap.radius ** 2

    def f(ts):
        jn = _normal_flux(packet, cap.radius, rule.directions, ts)
        return area * np.stack([jn @ rule.weights, np.abs(jn) @ rule.weights], axis=-1)
    return f


def _arrival_breakpoints(packet, R, lo, hi):
    speeds = np.linalg.norm(packet.wavevectors, axis=1)
    return [R / s for s in speeds if s > 0 and lo < R / s < hi]


def time_cutoff(packet, R, epsilon_tail):
    if not 0.0 < epsilon_tail < 1.0:
        raise ValueError("epsilon_tail must lie in (0, 1)")
    v_min, tail = slow_speed_cutoff(packet, epsilon_tail)
    if v_min <= 0:
        raise ValueError("packet has too much probability at low speed for the tail policy")
    return R / v_min, tail


def integrated_flux(packet, cap, T=0.0, epsilon_tail=1e-8, rule=None, time_tol=1e-9,
                    limit=4000):
    """Signed and absolute flux through ``cap`` integrated over [T, T_max].

    Raises
    ------
    UnconvergedError
        When the time quadrature misses ``time_tol``; ``partial`` then holds
        the :class:`FluxIntegralResult` reached so far.
    """
    if T < 0:
        raise ValueError("integrated_flux needs T >= 0; add finite_window_flux(T, 0) for T < 0")
    rule = rule or cap_quadrature(cap, DEFAULT_ORDER)
    t_max, tail = time_cutoff(packet, cap.radius, epsilon_tail)
    if t_max <= T:
        return FluxIntegralResult(0.0, 0.0, cap.radius, (T, t_max), tail, 0.0)
    f = _flux_integrand(packet, cap, rule)
    try:
        res = adaptive_gauss_kronrod(f, T, t_max, epsabs=time_tol, limit=limit,
                                     initial_panels=32,
                                     breakpoints=_arrival_breakpoints(packet, cap.radius, T, t_max))
    except UnconvergedError as exc:
        p = exc.partial
        exc.partial = FluxIntegralResult(float(p.value[0]), float(p.value[1]), cap.radius,
                                         (T, t_max), tail, p.error)
        raise
    return FluxIntegralResult(float(res.value[0]), float(res.value[1]), cap.radius,
                              (T, t_max), tail, res.error)


def asymptotic_integrated_flux(packet, cap, T, radial_spec=None):
    """Time integral of the asymptotic flux over [T, inf), computed after v = R/t.

    The substitution turns it into int_0^{R/T} dv v^2 int_cap dOmega |psi_hat|^2,
    which depends on R and T only through R/T.
    """
    if not T > 0:
        raise ValueError("asymptotic_integrated_flux needs T > 0")
    spec = radial_spec or RadialSpec()
    lo, hi, spread = momentum_window(packet)
    upper = min(cap.radius / T, hi)
    lower = lo if upper > lo else 0.0
    radii, weights = _radial_rule(lower, upper, spread, spec)
    return _polar_integral(_momentum_density_fn(packet), cap.cone, radii, weights,
                           spec.angular_order)


def asymptotic_integrated_flux_by_time(packet, cap, T, T_max=None, rule=None, time_tol=1e-10):
    """The same quantity by direct time quadrature of the asymptotic flux on the cap."""
    if not T > 0:
        raise ValueError("needs T > 0")
    rule = rule or cap_quadrature(cap, DEFAULT_ORDER)
    if T_max is None:
        lo = momentum_window(packet)[0]
        T_max = cap.radius / lo if lo > 0 else time_cutoff(packet, cap.radius, 1e-12)[0]
    pts = cap.radius * rule.directions
    area = cap.radius ** 2

    def f(ts):
        j0 = asymptotic_flux(packet, pts[None, :, :], ts[:, None])
        return area * (np.einsum("tni,ni->tn", j0, rule.directions) @ rule.weights)

    res = adaptive_gauss_kronrod(f, T, T_max, epsabs=time_tol, initial_panels=32,
                                 breakpoints=_arrival_breakpoints(packet, cap.radius, T, T_max))
    return float(res.value)


def fas_distance(packet, R, T=1.0, epsilon_tail=1e-8, rule=None, time_tol=1e-12,
                 time_rtol=1e-6, reference=None):
    """int_T^T_max dt int_{|x|=R} |(j - j_ref).n| dsigma with j_ref the asymptotic flux.

    ``reference`` may replace the asymptotic flux by any callable with the
    signature of :func:`flux_vector`.
    """
    if not T > 0:
        raise ValueError("fas_distance needs T > 0")
    rule = rule or sphere_rule(packet)
    reference = reference or asymptotic_flux
    t_max, _ = time_cutoff(packet, R, epsilon_tail)
    if t_max <= T:
        return 0.0
    pts = R * rule.directions
    area = R ** 2

    def f(ts):
        # both fields go through the same contraction, so identical fields cancel exactly
        j1, j2 = (np.einsum("tni,ni->tn", field(packet, pts[None, :, :], ts[:, None]),
                            rule.directions) for field in (flux_vector, reference))
        return area * (np.abs(j1 - j2) @ rule.weights)

    res = adaptive_gauss_kronrod(f, T, t_max, epsabs=time_tol, epsrel=time_rtol,
                                 initial_panels=32,
                                 breakpoints=_arrival_breakpoints(packet, R, T, t_max))
    return float(res.value)


def remainder_f(packet, v, t):
    """f(v, t): transform of (exp(i y^2 / 2t) - 1) psi(y), in closed form."""
    t = _check_positive_time(t)
    return chirped_fourier(packet, v, t) - fourier(packet, v)


def remainder_g(packet, v, t):
    """g(v, t) = grad_v f(v, t); shape (..., 3)."""
    t = _check_positive_time(t)
    _, grad = chirped_fourier(packet, v, t, with_grad=True)
    return grad - fourier_gradient(packet, v)


def _l1_once(packet, panels, order):
    from .wavepacket import evaluate

    r_hi = float(np.max(np.linalg.norm(packet.centers, axis=1) + 12.0 * packet.widths))
    radii, r_w = composite_gauss_legendre(0.0, r_hi, 8, panels)
    rule = cap_quadrature(Cone.full(), order)
    l1 = l1y = 0.0
    for start in range(0, len(radii), 16):
        r = radii[start:start + 16]
        w = r_w[start:start + 16] * r * r
        mod = np.abs(evaluate(packet, r[:, None, None] * rule.directions[None]))
        l1 += float(np.sum(w * (mod @ rule.weights)))
        l1y += float(np.sum(w * r * (mod @ rule.weights)))
    return l1, l1y


def l1_norms(packet, rel_tol=1e-8):
    """(||psi||_1, ||y psi||_1) by polar quadrature, checked against a coarser grid."""
    r_hi = float(np.max(np.linalg.norm(packet.centers, axis=1) + 12.0 * packet.widths))
    panels = max(4, math.ceil(2.0 * r_hi / float(np.min(packet.widths))))
    coarse = _l1_once(packet, panels, 48)
    fine = _l1_once(packet, 2 * panels, 64)
    for c, f in zip(coarse, fine):
        if abs(f - c) > rel_tol * abs(f):
            raise UnconvergedError(f"L1 norm quadrature unstable: {c} vs {f}", fine)
    return fine


def remainder_sample_grid(packet, n_v=7, n_t=16):
    """Documented (v, t) sample set for the sampled suprema of |f| and |g|.

    Velocities form an ``n_v``-cube spanning the momentum window in every
    direction together with the origin; times are log-spaced over
    [1e-2, 1e3].
    """
    hi = momentum_window(packet)[1]
    axis = np.linspace(-hi, hi, n_v)
    v = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    v = np.vstack([v, np.zeros(3), packet.wavevectors])
    t = np.logspace(-2, 3, n_t)
    return v, t


def remainder_bounds(packet, radii=(), T=1.0, epsilon_tail=1e-8):
    """Analytic bounds c_f, c_g with sampled suprema and, for ``radii``, the cross-term decay."""
    l1, l1y = l1_norms(packet)
    prefactor = 2.0 * (2.0 * math.pi) ** -1.5
    c_f, c_g = prefactor * l1, prefactor * l1y
    v, t = remainder_sample_grid(packet)
    vv = v[None, :, :]
    tt = t[:, None]
    abs_f = np.abs(remainder_f(packet, vv, tt))
    abs_g = np.linalg.norm(remainder_g(packet, vv, tt), axis=-1)
    decay = [(float(R), fas_distance(packet, float(R), T, epsilon_tail)) for R in radii]
    return RemainderDiagnostics(c_f, c_g, float(abs_f.max()), float(abs_g.max()), decay, l1, l1y,
                                samples=abs_f.size, violations_f=int((abs_f > c_f).sum()),
                                violations_g=int((abs_g > c_g).sum()))


def _log_abs_surface_flux(packet, R, rule, ts):
    psi, grad, m = scaled_state(packet, R * rule.directions, np.asarray(ts)[..., None])
    jn_s = np.abs(np.imag(np.conj(psi) * np.einsum("...i,...i->...", grad, rule.directions)))
    with np.errstate(divide="ignore"):
        logs = np.log(jn_s) + 2.0 * m + np.log(rule.weights) + 2.0 * math.log(R)
    return logsumexp(logs, axis=-1)


def log_finite_window_flux(packet, R, T1, T2, rule=None, rel_tol=1e-7, probes=65):
    """Natural log of :func:`finite_window_flux`, immune to underflow at large R."""
    if T2 < T1:
        raise ValueError("finite_window_flux needs T1 <= T2")
    if T1 == T2:
        return -math.inf
    rule = rule or sphere_rule(packet)
    ref = float(np.max(_log_abs_surface_flux(packet, R, rule, np.linspace(T1, T2, probes))))
    if not math.isfinite(ref):
        return -math.inf

    def f(ts):
        return np.exp(_log_abs_surface_flux(packet, R, rule, ts) - ref)

    res = adaptive_gauss_kronrod(f, T1, T2, epsabs=0.0, epsrel=rel_tol, initial_panels=8)
    return ref + math.log(res.value) if res.value > 0 else -math.inf


def finite_window_flux(packet, R, T1, T2, rule=None):
    """int_T1^T2 dt int_{|x|=R} |j.n| dsigma over the full sphere; times may be negative."""
    return math.exp(log_finite_window_flux(packet, R, T1, T2, rule))

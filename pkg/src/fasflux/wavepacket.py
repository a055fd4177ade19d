"""Free three-dimensional Gaussian wave packets in units hbar = m = 1.

A packet is a finite superposition

    psi(x) = sum_i c_i G_i(x),
    G_i(x) = (2 pi s_i^2)^(-3/4) exp(-|x - b_i|^2 / (4 s_i^2) + i k_i.(x - b_i)),

with every ``G_i`` of unit L2 norm. Internally each term is held in
exponent form ``exp(-a |x|^2 + B.x + C)`` with complex ``a`` (Re a > 0),
complex 3-vector ``B`` and complex ``C``. That family is closed under the
operations needed here (free evolution, Fourier transform, multiplication
by a chirp ``exp(i y^2 / 2t)``, products), so all of them are exact.

Fourier convention: ``psi_hat(k) = (2 pi)^(-3/2) int exp(-i k.y) psi(y) d^3y``.
Complex powers use the principal branch throughout; in particular
``(i t)^(-3/2) = t^(-3/2) exp(-3 i pi / 4)`` for ``t > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np


class InvalidPacketError(ValueError):
    pass


class OracleUnconvergedError(RuntimeError):
    pass


def _as_vector(value, name):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise InvalidPacketError(f"{name} must be a 3-vector, got {value!r}")
    if not np.all(np.isfinite(arr)):
        raise InvalidPacketError(f"{name} must be finite, got {value!r}")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class GaussianComponent:
    """One isotropic Gaussian term of a packet."""

    amplitude: complex = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    wavevector: tuple = (0.0, 0.0, 0.0)
    width: float = 1.0

    def __post_init__(self):
        amp = complex(self.amplitude)
        if not (math.isfinite(amp.real) and math.isfinite(amp.imag)):
            raise InvalidPacketError("amplitude must be finite")
        width = float(self.width)
        if not (math.isfinite(width) and width > 0):
            raise InvalidPacketError(f"width must be positive and finite, got {self.width!r}")
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "center", _as_vector(self.center, "center"))
        object.__setattr__(self, "wavevector", _as_vector(self.wavevector, "wavevector"))


@dataclass(frozen=True)
class WavePacket:
    """Immutable superposition of :class:`GaussianComponent` terms."""

    components: tuple
    norm_tolerance: float = 1e-9

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InvalidPacketError("a packet needs at least one component")
        for c in comps:
            if not isinstance(c, GaussianComponent):
                raise InvalidPacketError(f"not a GaussianComponent: {c!r}")
        if not self.norm_tolerance > 0:
            raise InvalidPacketError("norm_tolerance must be positive")
        object.__setattr__(self, "components", comps)

    def __len__(self):
        return len(self.components)

    # exponent-form data of the nonzero terms, shape (M,), (M, 3), (M,)
    @cached_property
    def _terms(self):
        comps = [c for c in self.components if c.amplitude != 0]
        amp = np.array([c.amplitude for c in comps], dtype=complex)
        if not comps:
            return amp, np.zeros(0, complex), np.zeros((0, 3), complex), np.zeros(0, complex)
        s2 = np.array([c.width ** 2 for c in comps])
        b = np.array([c.center for c in comps])
        k = np.array([c.wavevector for c in comps])
        a = (1.0 / (4.0 * s2)).astype(complex)
        B = b / (2.0 * s2[:, None]) + 1j * k
        C = (-np.sum(b * b, axis=1) / (4.0 * s2) - 1j * np.sum(k * b, axis=1)
             - 0.75 * np.log(2.0 * np.pi * s2))
        return amp, a, B, C.astype(complex)

    @cached_property
    def _fourier_terms(self):
        amp, a, B, C = self._terms
        return (amp,) + _fourier_form(a, B, C)

    @property
    def centers(self):
        return np.array([c.center for c in self.components])

    @property
    def wavevectors(self):
        return np.array([c.wavevector for c in self.components])

    @property
    def widths(self):
        return np.array([c.width for c in self.components])

    def mean_wavevector(self):
        """Amplitude-weighted mean of the component wavevectors."""
        w = np.abs([c.amplitude for c in self.components]) ** 2
        return (w[:, None] * self.wavevectors).sum(axis=0) / w.sum()

    def scaled(self, factor):
        """Copy with every amplitude multiplied by ``factor``."""
        return replace(self, components=tuple(
            replace(c, amplitude=c.amplitude * factor) for c in self.components))

    def rotated(self, matrix):
        """Copy with centers and wavevectors rotated by ``matrix``."""
        m = np.asarray(matrix, dtype=float)
        return replace(self, components=tuple(
            replace(c, center=m @ np.array(c.center), wavevector=m @ np.array(c.wavevector))
            for c in self.components))


def canonical_packet(name):
    """The reference packets G1 and G2.

    G1 is a single Gaussian (width 1, center 0, wavevector (0, 0, 4)); G2
    is the normalized equal-weight pair centred at (+-2, 0, 0) with the
    same width and wavevector.
    """
    name = name.upper()
    k = (0.0, 0.0, 4.0)
    if name == "G1":
        return normalize(WavePacket((GaussianComponent(1.0, (0, 0, 0), k, 1.0),)))
    if name == "G2":
        return normalize(WavePacket((GaussianComponent(1.0, (2, 0, 0), k, 1.0),
                                     GaussianComponent(1.0, (-2, 0, 0), k, 1.0))))
    raise KeyError(f"unknown canonical packet {name!r}")


# --- exponent-form algebra -------------------------------------------------

def _fourier_form(a, B, C):
    """Forward transform of exp(-a x^2 + B.x + C) in the same form."""
    ahat = 1.0 / (4.0 * a)
    Bhat = -1j * B / (2.0 * a)[..., None]
    Chat = C + np.sum(B * B, axis=-1) / (4.0 * a) + 1.5 * np.log(1.0 / (2.0 * a))
    return ahat, Bhat, Chat


def _inverse_fourier_form(ahat, Bhat, Chat):
    a = 1.0 / (4.0 * ahat)
    B = 1j * Bhat / (2.0 * ahat)[..., None]
    C = Chat + np.sum(Bhat * Bhat, axis=-1) / (4.0 * ahat) + 1.5 * np.log(1.0 / (2.0 * ahat))
    return a, B, C


def _evolved_terms(packet, t):
    """Exponent form of every term at time(s) ``t``; shapes gain t's axes."""
    amp, ahat, Bhat, Chat = packet._fourier_terms
    t = np.asarray(t, dtype=float)[..., None]
    ahat_t = ahat + 0.5j * t
    Bhat_t = np.broadcast_to(Bhat, ahat_t.shape + (3,))
    Chat_t = np.broadcast_to(Chat, ahat_t.shape)
    return (amp,) + _inverse_fourier_form(ahat_t, Bhat_t, Chat_t)


def _scaled_sum(amp, a, B, C, x, with_grad=True):
    """Evaluate sum amp*exp(-a x^2 + B.x + C) with a per-point log scale.

    Returns ``(value_s, grad_s, m)`` such that the true value is
    ``value_s * exp(m)``; the largest term of ``value_s`` has modulus of
    order one, so far tails never underflow.
    """
    x = np.asarray(x, dtype=float)
    xx = np.sum(x * x, axis=-1)[..., None]
    Bx = np.einsum("...mi,...i->...m", B, x)
    E = C - a * xx + Bx
    if amp.size == 0:
        shape = np.broadcast_shapes(E.shape[:-1], x.shape[:-1])
        return np.zeros(shape, complex), np.zeros(shape + (3,), complex), np.zeros(shape)
    with np.errstate(divide="ignore"):
        logmag = E.real + np.log(np.abs(amp))
    m = np.max(logmag, axis=-1)
    terms = amp * np.exp(E - m[..., None])
    value = terms.sum(axis=-1)
    if not with_grad:
        return value, None, m
    d = -2.0 * a[..., None] * x[..., None, :] + B
    grad = np.sum(terms[..., None] * d, axis=-2)
    return value, grad, m


def scaled_state(packet, x, t=0.0):
    """``(psi_s, grad_s, m)`` with psi_t(x) = psi_s * exp(m), likewise for the gradient."""
    amp, a, B, C = _evolved_terms(packet, t)
    return _scaled_sum(amp, a, B, C, x)


# --- public operations -----------------------------------------------------

def norm_squared(packet, t=0.0):
    """Closed-form ||psi_t||^2 from pairwise overlap integrals."""
    amp, a, B, C = _evolved_terms(packet, float(t))
    if amp.size == 0:
        return 0.0
    A = np.conj(a)[:, None] + a[None, :]
    S = np.conj(B)[:, None, :] + B[None, :, :]
    log_overlap = (1.5 * np.log(np.pi / A) + np.sum(S * S, axis=-1) / (4.0 * A)
                   + np.conj(C)[:, None] + C[None, :])
    gram = np.conj(amp)[:, None] * amp[None, :] * np.exp(log_overlap)
    return float(gram.sum().real)


def normalize(packet):
    """Rescale all amplitudes by one positive constant so that ||psi||_2 = 1."""
    n2 = norm_squared(packet, 0.0)
    if not n2 > 0 or not math.isfinite(n2):
        raise InvalidPacketError("cannot normalize a packet of zero norm")
    out = packet.scaled(1.0 / math.sqrt(n2))
    assert abs(norm_squared(out) - 1.0) <= out.norm_tolerance
    return out


def evaluate(packet, x, t=0.0):
    """psi_t(x) for points ``x`` of shape (..., 3); ``t`` broadcasts against them."""
    value, _, m = _scaled_sum(*_evolved_terms(packet, t), x, with_grad=False)
    return value * np.exp(m)


def gradient(packet, x, t=0.0):
    """Exact spatial gradient of psi_t at ``x``; shape (..., 3)."""
    _, grad, m = scaled_state(packet, x, t)
    return grad * np.exp(m)[..., None]


def fourier(packet, k):
    """psi_hat(k), symmetric (2 pi)^(-3/2) convention."""
    value, _, m = _scaled_sum(*packet._fourier_terms, k, with_grad=False)
    return value * np.exp(m)


def fourier_gradient(packet, k):
    """Gradient of psi_hat with respect to the momentum argument."""
    _, grad, m = _scaled_sum(*packet._fourier_terms, k)
    return grad * np.exp(m)[..., None]


def momentum_density(packet, k):
    return np.abs(fourier(packet, k)) ** 2


def _check_positive_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError("t must be strictly positive")
    return t


def asymptotic_form(packet, x, t):
    """(i t)^(-3/2) exp(i x^2 / 2t) psi_hat(x / t), principal branch."""
    t = _check_positive_time(t)
    x = np.asarray(x, dtype=float)
    phase = np.exp(-1.5 * np.log(1j * t) + 1j * np.sum(x * x, axis=-1) / (2.0 * t))
    return phase * fourier(packet, x / t[..., None])


def chirped_fourier(packet, v, t, with_grad=False):
    """Transform of exp(i y^2 / 2t) psi(y) at ``v`` (optionally with v-gradient)."""
    amp, a, B, C = packet._terms
    t = np.asarray(t, dtype=float)[..., None]
    a_t = a - 0.5j / t
    ahat, Bhat, Chat = _fourier_form(a_t, np.broadcast_to(B, a_t.shape + (3,)),
                                     np.broadcast_to(C, a_t.shape))
    value, grad, m = _scaled_sum(amp, ahat, Bhat, Chat, v, with_grad=with_grad)
    scale = np.exp(m)
    if with_grad:
        return value * scale, grad * scale[..., None]
    return value * scale


@dataclass(frozen=True)
class OracleGrid:
    """Tensor midpoint grid for the propagator oracle.

    Each component is integrated over ``center +- half_width * width`` per
    axis. ``points`` fixes the per-axis count; by default it is chosen
    from the largest local frequency of the integrand.
    """

    half_width: float = 8.0
    points: int | None = None
    rel_tol: float = 1e-4


def _midpoint_axis(xd, t, bd, kd, sigma, L, n):
    h = 2.0 * L * sigma / n
    y = bd - L * sigma + (np.arange(n) + 0.5) * h
    phase = (1j * (xd - y) ** 2 / (2.0 * t) - (y - bd) ** 2 / (4.0 * sigma ** 2)
             + 1j * kd * (y - bd))
    return h * np.exp(-0.5 * np.log(2j * np.pi * t)) * np.exp(phase).sum()


def _oracle_once(packet, x, t, grid, refine):
    total = 0.0j
    for comp in packet.components:
        if comp.amplitude == 0:
            continue
        sigma = comp.width
        L = grid.half_width
        norm = (2.0 * np.pi * sigma ** 2) ** -0.75
        prod = comp.amplitude * norm
        for d in range(3):
            if grid.points is None:
                omega = abs(comp.wavevector[d]) + (abs(x[d] - comp.center[d]) + L * sigma) / t
                h = min(sigma / 8.0, 0.3 / omega)
                n = int(math.ceil(2.0 * L * sigma / h))
            else:
                n = int(grid.points)
            prod *= _midpoint_axis(x[d], t, comp.center[d], comp.wavevector[d],
                                   sigma, L, n * refine)
        total += prod
    return total


def evolve_by_quadrature_oracle(packet, x, t, grid=None):
    """Brute-force evaluation of the free propagator integral at one point.

    Sums ``(2 pi i t)^(-3/2) exp(i |x - y|^2 / 2t) psi(y)`` over a tensor
    midpoint grid. Both factors separate over Cartesian axes, so the 3-D
    tensor sum is computed exactly as a product of three 1-D sums per
    component. The grid is refined once; the two answers must agree to
    ``grid.rel_tol``.
    """
    grid = grid or OracleGrid()
    t = float(t)
    if not t > 0:
        raise ValueError("the propagator oracle needs t > 0")
    x = np.asarray(x, dtype=float).reshape(3)
    coarse = _oracle_once(packet, x, t, grid, 1)
    fine = _oracle_once(packet, x, t, grid, 2)
    scale = max(abs(fine), 1e-300)
    if abs(fine - coarse) > grid.rel_tol * scale:
        raise OracleUnconvergedError(
            f"oracle resolutions disagree: {coarse} vs {fine} at x={x}, t={t}")
    return fine

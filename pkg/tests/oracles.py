"""Independent reference computations used only by the tests.

None of these touch the library's exponent-form algebra: they sum the
defining integrals on plain grids or solve closed-form trajectories.
"""

import math

import numpy as np
from scipy.optimize import brentq


def _axis_grid(center, sigma, half_width=10.0, per_sigma=16):
    n = int(2 * half_width * per_sigma)
    h = 2 * half_width * sigma / n
    y = center - half_width * sigma + (np.arange(n) + 0.5) * h
    return y, h


def _component_axis_factor(y, h, bd, kd, sigma, kernel):
    g = np.exp(-(y - bd) ** 2 / (4 * sigma ** 2) + 1j * kd * (y - bd))
    return h * np.sum(kernel(y) * g)


def fourier_by_grid(packet, k):
    """(2 pi)^(-3/2) int exp(-i k.y) psi(y) dy, one separable 1-D sum per axis."""
    k = np.asarray(k, float)
    total = 0j
    for c in packet.components:
        val = c.amplitude * (2 * np.pi * c.width ** 2) ** -0.75 * (2 * np.pi) ** -1.5
        for d in range(3):
            y, h = _axis_grid(c.center[d], c.width)
            val *= _component_axis_factor(y, h, c.center[d], c.wavevector[d], c.width,
                                          lambda yy, kk=k[d]: np.exp(-1j * kk * yy))
        total += val
    return total


def remainder_f_by_grid(packet, v, t):
    """(2 pi)^(-3/2) int exp(-i v.y) (exp(i y^2/2t) - 1) psi(y) dy."""
    v = np.asarray(v, float)
    chirped = 0j
    for c in packet.components:
        val = c.amplitude * (2 * np.pi * c.width ** 2) ** -0.75 * (2 * np.pi) ** -1.5
        for d in range(3):
            y, h = _axis_grid(c.center[d], c.width, half_width=12.0, per_sigma=64)
            val *= _component_axis_factor(
                y, h, c.center[d], c.wavevector[d], c.width,
                lambda yy, vv=v[d]: np.exp(-1j * vv * yy + 1j * yy * yy / (2 * t)))
        chirped += val
    return chirped - fourier_by_grid(packet, v)


def norm_by_brute_force(packet, half=12.0, h=0.1):
    """int |psi|^2 over [-half, half]^3 by the midpoint rule, slab by slab."""
    from fasflux.wavepacket import evaluate
    axis = -half + (np.arange(int(round(2 * half / h))) + 0.5) * h
    yy, zz = np.meshgrid(axis, axis, indexing="ij")
    total = 0.0
    for x in axis:
        pts = np.stack([np.full_like(yy, x), yy, zz], axis=-1)
        total += float(np.sum(np.abs(evaluate(packet, pts)) ** 2))
    return total * h ** 3


def gaussian_width(sigma, t):
    return sigma * math.sqrt(1 + t * t / (4 * sigma ** 4))


def free_gaussian_trajectory(x0, t, center, k, sigma):
    """Exact Bohmian path of a single free Gaussian: ballistic centre plus scaled offset."""
    x0, center, k = (np.asarray(a, float) for a in (x0, center, k))
    return center + k * t + (x0 - center) * gaussian_width(sigma, t) / sigma


def free_gaussian_exit_time(x0, R, center, k, sigma, t_hi=1e4):
    def f(t):
        return np.linalg.norm(free_gaussian_trajectory(x0, t, center, k, sigma)) - R
    return brentq(f, 0.0, t_hi, xtol=1e-14, rtol=1e-15)

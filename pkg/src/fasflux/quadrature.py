"""One-dimensional quadrature rules shared by the flux and cone modules.

Two tools live here: composite Gauss-Legendre rules for radial and
polar integrals, and a globally adaptive Gauss-Kronrod (7/15) integrator
for vector-valued integrands, used for the time integrals of surface
fluxes.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

# Kronrod 15-point abscissae on [0, 1]; the odd-indexed entries (and 0)
# are the 7-point Gauss nodes.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[[9, 11, 13]] = _WG[2::-1]
GAUSS_WEIGHTS[7] = _WG[3]


class UnconvergedError(RuntimeError):
    """Raised when an adaptive scheme exhausts its budget.

    The best available estimate is attached as ``partial`` so callers can
    still inspect it.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@lru_cache(maxsize=64)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a, b, n):
    """Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = _leggauss(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gauss_legendre(a, b, n_per_panel, panels):
    """Composite Gauss-Legendre rule with ``panels`` equal panels on ``[a, b]``."""
    panels = max(int(panels), 1)
    edges = np.linspace(a, b, panels + 1)
    x, w = _leggauss(int(n_per_panel))
    half = 0.5 * np.diff(edges)
    nodes = edges[:-1, None] + half[:, None] * (x[None, :] + 1.0)
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


@dataclass
class QuadResult:
    value: np.ndarray
    error: float
    intervals: int
    evaluations: int
    breakpoints: list = field(default_factory=list, repr=False)


def _gk15(f, a, b):
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    values = np.asarray(f(center + half * KRONROD_NODES), dtype=float)
    # values has shape (15, ...) -- one row per node
    kron = half * np.tensordot(KRONROD_WEIGHTS, values, axes=(0, 0))
    gauss = half * np.tensordot(GAUSS_WEIGHTS, values, axes=(0, 0))
    err = float(np.max(np.abs(kron - gauss))) if kron.ndim else abs(kron - gauss)
    return kron, err


def adaptive_gauss_kronrod(f, a, b, *, epsabs=1e-9, epsrel=0.0, limit=2000,
                           initial_panels=16, breakpoints=()):
    """Globally adaptive Gauss-Kronrod 7/15 integration of a vectorised ``f``.

    ``f`` receives a 1-D array of abscissae and must return an array whose
    leading axis runs over them; trailing axes are integrated component by
    component. The interval with the largest error estimate is bisected
    until the summed estimate drops below ``max(epsabs, epsrel*|I|)``
    (infinity norm over components).

    Raises
    ------
    UnconvergedError
        If ``limit`` intervals are in use and the tolerance is not met.
    """
    if b == a:
        probe = np.asarray(f(np.array([a])), dtype=float)[0]
        return QuadResult(np.zeros_like(probe), 0.0, 0, 1)
    if b < a:
        raise ValueError("adaptive_gauss_kronrod expects a <= b")
    edges = np.linspace(a, b, max(int(initial_panels), 1) + 1)
    extra = [p for p in breakpoints if a < p < b]
    if extra:
        edges = np.unique(np.concatenate([edges, extra]))

    heap = []
    total = None
    total_err = 0.0
    evaluations = 0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, err = _gk15(f, lo, hi)
        evaluations += 15
        heap.append((-err, float(lo), float(hi), val))
        total = val if total is None else total + val
        total_err += err
    heapq.heapify(heap)

    def _target(tot):
        return max(epsabs, epsrel * float(np.max(np.abs(tot))))

    while total_err > _target(total):
        if len(heap) >= limit:
            # sum from the interval list (not the running total) to shed drift
            value = sum(item[3] for item in heap)
            partial = QuadResult(value, total_err, len(heap), evaluations)
            raise UnconvergedError(
                f"adaptive quadrature hit {limit} intervals with error "
                f"estimate {total_err:.3e}", partial)
        neg_err, lo, hi, val = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        left, err_l = _gk15(f, lo, mid)
        right, err_r = _gk15(f, mid, hi)
        evaluations += 30
        total = total - val + left + right
        total_err += err_l + err_r + neg_err
        heapq.heappush(heap, (-err_l, lo, mid, left))
        heapq.heappush(heap, (-err_r, mid, hi, right))

    items = sorted(heap, key=lambda item: item[1])
    value = items[0][3].copy() if np.ndim(items[0][3]) else items[0][3]
    for item in items[1:]:
        value = value + item[3]
    error = float(sum(-item[0] for item in items))
    return QuadResult(value, error, len(items), evaluations,
                      [item[1] for item in items] + [items[-1][2]])

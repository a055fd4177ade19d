"""Bohmian trajectories and sphere-crossing statistics.

Trajectories solve dX/dt = Im(grad psi_t / psi_t)(X) from initial points
drawn from |psi|^2. Integration is a batched Dormand-Prince 5(4) scheme:
every trajectory keeps its own time, step size and error control, and
all arithmetic is elementwise per trajectory, so a trajectory's path
does not depend on which batch or worker it ran in. Sphere crossings are
located on the scheme's continuous extension by bisection.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conescan import median_speed
from .geometry import contains
from .wavepacket import evaluate, scaled_state

NODE_FLOOR = 1e-300
NODE_BUDGET = 60

# Dormand-Prince 5(4) tableau with its quartic continuous extension
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_E = [-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40]
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class NearNodeError(RuntimeError):
    pass


class TrajectoryAbortError(RuntimeError):
    pass


class EnvelopeError(RuntimeError):
    pass


class EnsembleQualityError(RuntimeError):
    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    steps: int
    rejected: int
    max_local_error: float

    @property
    def samples(self):
        return list(zip(self.times.tolist(), self.positions))

    @property
    def integrator_stats(self):
        return self.steps, self.rejected, self.max_local_error


@dataclass(frozen=True)
class CrossingRecord:
    R: float
    time: float
    exit_point: np.ndarray
    direction: int
    ordinal: int


@dataclass(frozen=True)
class EnsembleStats:
    n: int
    first_cross_in_cap: int
    multi_crossers: int
    estimate: float
    ci95: float
    seed: int
    no_cross: int = 0
    aborted: int = 0
    mean_signed_crossings: float = 0.0
    mean_total_crossings: float = 0.0
    signed_ci95: float = 0.0
    total_ci95: float = 0.0

    def __post_init__(self):
        for name in ("first_cross_in_cap", "multi_crossers", "no_cross"):
            if not 0 <= getattr(self, name) <= self.n:
                raise AssertionError(f"{name} out of range")

    @property
    def multi_cross_fraction(self):
        return self.multi_crossers / self.n

    @property
    def abort_fraction(self):
        return self.aborted / (self.n + self.aborted)


def proportion_ci95(count, n):
    """95% half-width at the Agresti-Coull adjusted proportion.

    Matches 1.96*sqrt(p(1-p)/n) for interior p, but stays positive when
    every (or no) trajectory lands in the cap.
    """
    z2 = 1.96 ** 2
    n_adj = n + z2
    p_adj = (count + 0.5 * z2) / n_adj
    return 1.96 * math.sqrt(p_adj * (1.0 - p_adj) / n_adj)


# --- velocity field ----------------------------------------------------------

def _velocity_batch(packet, x, t, node_floor=NODE_FLOOR):
    psi, grad, _ = scaled_state(packet, x, t)
    dens = psi.real ** 2 + psi.imag ** 2
    bad = ~(dens > node_floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.imag(grad / psi[..., None])
    bad |= ~np.all(np.isfinite(v), axis=-1)
    return v, bad


def velocity(packet, x, t, node_floor=NODE_FLOOR):
    """Bohmian velocity Im(grad psi / psi) = j / |psi|^2.

    The node test compares ``node_floor`` with |psi|^2 after removing the
    common exponential scale of the Gaussian terms, so it flags genuine
    cancellations between terms rather than far tails.
    """
    v, bad = _velocity_batch(packet, np.asarray(x, dtype=float), t, node_floor)
    if np.any(bad):
        raise NearNodeError("velocity requested at a (near) node of the wave function")
    return v


# --- initial conditions ----------------------------------------------------------

def _substream(seed, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def sample_initial(packet, n, seed, start=0, return_stats=False):
    """Draw ``n`` points from |psi|^2 by rejection from the component mixture.

    Trajectory ``start + i`` uses its own counter-based stream keyed by
    (seed, start + i), so a point never depends on how the ensemble is
    split. The envelope ``M * sum_i |c_i|^2 |G_i|^2`` dominates |psi|^2 by
    Cauchy-Schwarz; for a single component it is exact.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    comps = [c for c in packet.components if c.amplitude != 0]
    weights = np.array([abs(c.amplitude) ** 2 for c in comps])
    total = weights.sum()
    probs = weights / total
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    centers = np.array([c.center for c in comps])
    widths = np.array([c.width for c in comps])
    env_scale = len(comps) * total
    batch = 4

    def mixture_density(x):
        dens = np.zeros(x.shape[:-1])
        for b, w, p in zip(centers, widths, probs):
            d2 = np.sum((x - b) ** 2, axis=-1)
            dens = dens + p * (2 * np.pi * w * w) ** -1.5 * np.exp(-d2 / (2 * w * w))
        return dens

    out = np.empty((n, 3))
    streams = [_substream(seed, start + i) for i in range(n)]
    pending = np.arange(n)
    proposals = accepted = 0
    while pending.size:
        # every pending trajectory draws its next batch from its own stream
        draws = [(g.random(batch), g.standard_normal((batch, 3)), g.random(batch))
                 for g in (streams[i] for i in pending)]
        which = np.searchsorted(cum, np.array([d[0] for d in draws]), side="right")
        x = centers[which] + widths[which][..., None] * np.array([d[1] for d in draws])
        u = np.array([d[2] for d in draws])
        target = np.abs(evaluate(packet, x)) ** 2
        ok = u * env_scale * mixture_density(x) <= target
        hit = ok.any(axis=1)
        first = ok.argmax(axis=1)
        out[pending[hit]] = x[hit, first[hit]]
        proposals += int((first[hit] + 1).sum()) + batch * int((~hit).sum())
        accepted += int(hit.sum())
        pending = pending[~hit]
        if proposals >= 10_000 and accepted < 0.01 * proposals:
            raise EnvelopeError(f"rejection acceptance {accepted}/{proposals} below 1%")
    if return_stats:
        return out, accepted / proposals
    return out


# --- batched Dormand-Prince ----------------------------------------------------

def _dense(y_old, h, K, theta):
    """Continuous extension at fraction ``theta`` (per lane) of the step."""
    # elementwise on purpose: a BLAS product would make rounding depend on batch shape
    powers = (theta, theta ** 2, theta ** 3, theta ** 4)
    acc = np.zeros_like(y_old)
    for s in range(7):
        if not _P[s].any():
            continue
        q = _P[s, 0] * powers[0] + _P[s, 1] * powers[1] + _P[s, 2] * powers[2] + _P[s, 3] * powers[3]
        acc = acc + K[s] * q[..., None]
    return y_old + h[..., None] * acc


@dataclass
class _BatchResult:
    t: np.ndarray
    y: np.ndarray
    steps: np.ndarray
    rejected: np.ndarray
    aborted: np.ndarray
    max_err: np.ndarray
    crossings: list = field(default_factory=list)   # (lane, time, point, direction)
    record: list | None = None


def _norm3(v):
    return np.sqrt(v[..., 0] ** 2 + v[..., 1] ** 2 + v[..., 2] ** 2)


def _integrate_batch(packet, x0, t0, t_end, tol=1e-8, R=None, stop_at_first=False,
                     record=False, node_floor=NODE_FLOOR, max_iterations=200_000):
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    N = len(x0)
    t = np.full(N, float(t0))
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float), (N,)).copy()
    y = x0.copy()
    steps = np.zeros(N, int)
    rejected = np.zeros(N, int)
    node_hits = np.zeros(N, int)
    aborted = np.zeros(N, bool)
    max_err = np.zeros(N)
    k1, bad = _velocity_batch(packet, y, t, node_floor)
    aborted |= bad
    active = ~aborted & (t < t_end)
    speed = _norm3(np.where(bad[:, None], 0.0, k1))
    h = np.minimum(0.01 * (1.0 + _norm3(y)) / np.maximum(speed, 1e-12), t_end - t)
    h = np.maximum(h, 1e-6)
    crossings = []
    rec = [[(float(t[i]), y[i].copy())] for i in range(N)] if record else None

    for _ in range(max_iterations):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ti, yi, hi = t[idx], y[idx], h[idx]
        K = [k1[idx]]
        if R is not None:
            hi = np.minimum(hi, 0.2 * R / np.maximum(_norm3(K[0]), 1e-12))
        hi = np.minimum(hi, t_end[idx] - ti)
        badi = np.zeros(idx.size, bool)
        for s in range(1, 6):
            acc = np.zeros_like(yi)
            for j, a in enumerate(_A[s]):
                acc = acc + a * K[j]
            ks, b = _velocity_batch(packet, yi + hi[:, None] * acc, ti + _C[s] * hi, node_floor)
            K.append(ks)
            badi |= b
        acc = np.zeros_like(yi)
        for j, b_coef in enumerate(_B):
            acc = acc + b_coef * K[j]
        y_new = yi + hi[:, None] * acc
        k7, b = _velocity_batch(packet, y_new, ti + hi, node_floor)
        K.append(k7)
        badi |= b
        err = np.zeros_like(yi)
        for j, e in enumerate(_E):
            err = err + e * K[j]
        err = hi[:, None] * err
        scale = tol + tol * np.maximum(np.abs(yi), np.abs(y_new))
        ratio = err / scale
        with np.errstate(invalid="ignore"):
            enorm = np.sqrt((ratio[:, 0] ** 2 + ratio[:, 1] ** 2 + ratio[:, 2] ** 2) / 3.0)
        enorm = np.where(badi, np.inf, enorm)
        accept = enorm <= 1.0

        # near-node lanes: shrink hard, abort once a trajectory has used up its budget
        # (counted over the whole run, so creeping towards a node cannot stall)
        node_hits[idx] += badi
        newly_aborted = idx[badi & (node_hits[idx] > NODE_BUDGET)]
        aborted[newly_aborted] = True
        rejected[idx[~accept]] += 1

        with np.errstate(divide="ignore"):
            factor = np.where(enorm == 0, 5.0, 0.9 * enorm ** -0.2)
        factor = np.clip(factor, 0.2, 5.0)
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        factor = np.where(badi, 0.25, factor)
        h[idx] = hi * factor

        acc_idx = np.flatnonzero(accept)
        if acc_idx.size:
            lanes = idx[acc_idx]
            h_acc = hi[acc_idx]
            y_old = yi[acc_idx]
            y_nw = y_new[acc_idx]
            K_acc = [k[acc_idx] for k in K]
            if R is not None:
                found = _find_crossings(lanes, ti[acc_idx], h_acc, y_old, y_nw, K_acc, R)
                crossings.extend(found)
                if stop_at_first and found:
                    active[[c[0] for c in found]] = False
            t[lanes] = ti[acc_idx] + h_acc
            y[lanes] = y_nw
            k1[lanes] = K_acc[6]
            steps[lanes] += 1
            max_err[lanes] = np.maximum(max_err[lanes], enorm[acc_idx] * tol)
            if record:
                for lane in lanes:
                    rec[lane].append((float(t[lane]), y[lane].copy()))
            done = lanes[t[lanes] >= t_end[lanes] * (1 - 1e-15) - 1e-300]
            active[done] = False
        active[newly_aborted] = False
    else:
        raise TrajectoryAbortError("trajectory integration exceeded its iteration budget")

    return _BatchResult(t, y, steps, rejected, aborted, max_err, crossings, rec)


def _find_crossings(lanes, t_old, h, y_old, y_new, K, R, samples=8):
    """Crossings of |X| = R inside accepted steps, found on the dense output."""
    thetas = np.linspace(0.0, 1.0, samples + 1)
    pos = np.stack([y_old] + [_dense(y_old, h, K, np.full(len(h), th)) for th in thetas[1:-1]]
                   + [y_new])
    outside = _norm3(pos) > R                    # (samples + 1, n)
    change = outside[1:] != outside[:-1]
    if not change.any():
        return []
    seg, lane_pos = np.nonzero(change)
    lo = thetas[seg]
    hi = thetas[seg + 1]
    going_out = outside[seg + 1, lane_pos]
    sub_K = [k[lane_pos] for k in K]
    sub_y, sub_h = y_old[lane_pos], h[lane_pos]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        out_mid = _norm3(_dense(sub_y, sub_h, sub_K, mid)) > R
        move_lo = out_mid != going_out
        lo = np.where(move_lo, mid, lo)
        hi = np.where(move_lo, hi, mid)
    theta = 0.5 * (lo + hi)
    points = _dense(sub_y, sub_h, sub_K, theta)
    times = t_old[lane_pos] + theta * sub_h
    order = np.lexsort((times, lane_pos))
    return [(int(lanes[lane_pos[i]]), float(times[i]), points[i], 1 if going_out[i] else -1)
            for i in order]


# --- public trajectory operations ------------------------------------------------

def integrate_trajectory(packet, x0, t0, t_end, tol=1e-8):
    """Integrate one trajectory and return every accepted step."""
    if not t0 < t_end:
        raise ValueError("integrate_trajectory needs t0 < t_end")
    res = _integrate_batch(packet, np.asarray(x0, float)[None], t0, t_end, tol, record=True)
    if res.aborted[0]:
        raise TrajectoryAbortError("trajectory ran into a node of the wave function")
    times = np.array([s[0] for s in res.record[0]])
    positions = np.array([s[1] for s in res.record[0]])
    return Trajectory(times, positions, int(res.steps[0]), int(res.rejected[0]),
                      float(res.max_err[0]))


def typical_speed(packet):
    k = np.linalg.norm(packet.mean_wavevector())
    return float(k) if k > 0 else median_speed(packet)


def default_time_budget(packet, R):
    return 4.0 * R / typical_speed(packet)


def first_crossings(packet, x0, R, t_budget=None, tol=1e-8, t0=0.0):
    """Batched :func:`first_crossing`; one entry (record or ``None``) per start point."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if not np.all(np.linalg.norm(x0, axis=1) < R):
        raise ValueError("first_crossing needs starting points inside the sphere")
    t_budget = default_time_budget(packet, R) if t_budget is None else float(t_budget)
    res = _integrate_batch(packet, x0, t0, t0 + t_budget, tol, R=R, stop_at_first=True)
    if np.any(res.aborted):
        raise TrajectoryAbortError("trajectory ran into a node of the wave function")
    out = [None] * len(x0)
    for lane, time, point, direction in res.crossings:
        if out[lane] is None:
            out[lane] = CrossingRecord(float(R), time, point, direction, 1)
    return out


def first_crossing(packet, x0, R, t_budget=None, tol=1e-8, t0=0.0):
    """First crossing of the sphere |x| = R for a trajectory starting inside it.

    Returns ``None`` when the trajectory is still inside after ``t_budget``
    (default ``4 R / v_typical``).
    """
    return first_crossings(packet, np.asarray(x0, dtype=float)[None], R, t_budget, tol, t0)[0]


def _run_chunk(args):
    packet, R, axis, half_angle, seed, start, count, t_budget, tol = args
    from .geometry import Cone
    cone = Cone(axis, half_angle)
    x0 = sample_initial(packet, count, seed, start)
    outside = int(np.sum(~(np.linalg.norm(x0, axis=1) < R)))
    if outside:
        raise ValueError(f"{outside} sampled start points lie outside the sphere R={R}")
    res = _integrate_batch(packet, x0, 0.0, t_budget, tol, R=R)
    first_in_cap = np.zeros(count, bool)
    has_cross = np.zeros(count, bool)
    n_cross = np.zeros(count, int)
    signed_cap = np.zeros(count, int)
    total_cap = np.zeros(count, int)
    for lane, _, point, direction in res.crossings:
        in_cap = bool(contains(cone, point))
        if not has_cross[lane]:
            first_in_cap[lane] = in_cap
            has_cross[lane] = True
        n_cross[lane] += 1
        if in_cap:
            signed_cap[lane] += direction
            total_cap[lane] += 1
    return dict(first_in_cap=first_in_cap, has_cross=has_cross, n_cross=n_cross,
                signed_cap=signed_cap, total_cap=total_cap, aborted=res.aborted.copy())


def crossing_arrays(packet, R, cone, n, seed, t_budget=None, tol=1e-8, workers=1, chunk=2500):
    """Per-trajectory crossing summaries, merged in trajectory order."""
    t_budget = default_time_budget(packet, R) if t_budget is None else float(t_budget)
    jobs = [(packet, float(R), cone.axis, cone.half_angle, int(seed), start,
             min(chunk, n - start), t_budget, tol) for start in range(0, n, chunk)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(job) for job in jobs]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def crossing_statistics(packet, R, cone, n, seed, t_budget=None, tol=1e-8, workers=1,
                        max_abort_fraction=0.01):
    """Monte Carlo estimate of the probability that the first exit lies in the cap.

    Also reports the mean number of signed (outward minus inward) and of
    total crossings of the cap per trajectory, and how many trajectories
    cross the sphere more than once.
    """
    if n < 100:
        raise ValueError("crossing_statistics needs n >= 100")
    arr = crossing_arrays(packet, R, cone, n, seed, t_budget, tol, workers)
    keep = ~arr["aborted"]
    aborted = int((~keep).sum())
    used = int(keep.sum())
    first = int(arr["first_in_cap"][keep].sum())
    multi = int((arr["n_cross"][keep] >= 2).sum())
    no_cross = int((~arr["has_cross"][keep]).sum())
    signed = arr["signed_cap"][keep].astype(float)
    total = arr["total_cap"][keep].astype(float)
    ci = proportion_ci95(first, used) if used else math.inf

    def mean_ci(values):
        sd = values.std(ddof=1) if used > 1 else 0.0
        return max(1.96 * sd / math.sqrt(used), ci)

    stats = EnsembleStats(
        n=used, first_cross_in_cap=first, multi_crossers=multi,
        estimate=first / used if used else math.nan, ci95=ci, seed=int(seed),
        no_cross=no_cross, aborted=aborted,
        mean_signed_crossings=float(signed.mean()) if used else math.nan,
        mean_total_crossings=float(total.mean()) if used else math.nan,
        signed_ci95=mean_ci(signed), total_ci95=mean_ci(total))
    if aborted > max_abort_fraction * n:
        raise EnsembleQualityError(f"{aborted} of {n} trajectories aborted", stats)
    return stats

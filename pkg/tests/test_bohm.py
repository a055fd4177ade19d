import math

import numpy as np
import pytest
from scipy import integrate, stats

from fasflux import bohm
from fasflux.flux import flux_vector
from fasflux.geometry import Cone
from fasflux.wavepacket import GaussianComponent, WavePacket, evaluate, normalize

from .oracles import free_gaussian_exit_time, free_gaussian_trajectory, gaussian_width

Z30 = Cone.from_degrees((0, 0, 1), 30)


@pytest.fixture(scope="module")
def rest():
    return normalize(WavePacket((GaussianComponent(1.0, (0, 0, 0), (0, 0, 0), 1.0),)))


# velocity field

def test_velocity_at_center_is_wavevector():
    k0 = np.array([0.5, -2.0, 1.0])
    p = normalize(WavePacket((GaussianComponent(1.0, (1, 2, 3), k0, 0.7),)))
    np.testing.assert_allclose(bohm.velocity(p, (1, 2, 3), 0.0), k0, rtol=1e-14)


def test_velocity_of_packet_at_rest_is_radial(rest):
    x = np.random.default_rng(0).normal(scale=3, size=(40, 3))
    v = bohm.velocity(rest, x, 2.5)
    assert np.abs(np.cross(x, v)).max() <= 1e-14 * np.abs(x).max() * np.abs(v).max()


def test_velocity_is_flux_over_density(G2):
    rng = np.random.default_rng(1)
    x = rng.normal(scale=3, size=(50, 3)) + (0, 0, 8)
    t = rng.uniform(0, 4, size=50)
    expected = flux_vector(G2, x, t) / (np.abs(evaluate(G2, x, t)) ** 2)[:, None]
    np.testing.assert_allclose(bohm.velocity(G2, x, t), expected, rtol=1e-10)


def test_velocity_at_node_raises():
    # exact cancellation: two copies with opposite signs
    c = GaussianComponent(1.0, (0, 0, 0), (0, 0, 1), 1.0)
    node = WavePacket((c, GaussianComponent(-1.0, c.center, c.wavevector, c.width)))
    with pytest.raises(bohm.NearNodeError):
        bohm.velocity(node, (0.1, 0, 0), 0.0)


# sampling

def test_single_gaussian_acceptance_is_total(G1):
    _, rate = bohm.sample_initial(G1, 500, 3, return_stats=True)
    assert rate == 1.0


def test_sample_mean_of_g1(G1):
    x = bohm.sample_initial(G1, 100_000, 4)
    assert np.abs(x.mean(axis=0)).max() <= 4 * 1.0 / math.sqrt(1e5) * 4


def test_two_gaussian_marginal_chi_square(G2):
    x = bohm.sample_initial(G2, 20_000, 5)[:, 0]
    # marginal of |psi|^2 along the line through both centres
    dens = lambda s: (np.exp(-(s - 2) ** 2 / 4) + np.exp(-(s + 2) ** 2 / 4)) ** 2
    edges = np.linspace(-6, 6, 25)
    norm = integrate.quad(dens, -np.inf, np.inf)[0]
    probs = [integrate.quad(dens, a, b)[0] / norm for a, b in zip(edges[:-1], edges[1:])]
    probs = np.array([integrate.quad(dens, -np.inf, -6)[0] / norm] + probs
                     + [integrate.quad(dens, 6, np.inf)[0] / norm])
    counts = np.histogram(x, bins=np.concatenate([[-np.inf], edges, [np.inf]]))[0]
    keep = probs * len(x) >= 5
    expected = probs[keep] * len(x)
    observed = counts[keep]
    expected *= observed.sum() / expected.sum()
    assert stats.chisquare(observed, expected).pvalue > 0.01


def test_sampling_is_split_invariant(G2):
    whole = bohm.sample_initial(G2, 60, 9)
    parts = np.vstack([bohm.sample_initial(G2, 25, 9), bohm.sample_initial(G2, 35, 9, start=25)])
    assert np.array_equal(whole, parts)
    assert not np.array_equal(whole, bohm.sample_initial(G2, 60, 10))


def test_envelope_failure_detected():
    # almost-cancelling pair: |psi|^2 is tiny compared with the envelope
    c = GaussianComponent(1.0, (0, 0, 0), (0, 0, 0), 1.0)
    nearly = WavePacket((c, GaussianComponent(-0.9999, (0, 0, 1e-4), (0, 0, 0), 1.0)))
    with pytest.raises(bohm.EnvelopeError):
        bohm.sample_initial(nearly, 5000, 1)


# trajectories

def test_trajectory_of_packet_at_rest(rest):
    traj = bohm.integrate_trajectory(rest, (1, 0, 0), 0.0, 10.0)
    directions = traj.positions / np.linalg.norm(traj.positions, axis=1)[:, None]
    assert np.abs(directions - (1, 0, 0)).max() <= 1e-8
    ratio = np.linalg.norm(traj.positions, axis=1) / [gaussian_width(1.0, t) for t in traj.times]
    assert np.abs(ratio - 1.0).max() <= 1e-6


def test_trajectory_matches_closed_form(G1):
    x0 = np.array([0.4, -0.7, 0.2])
    traj = bohm.integrate_trajectory(G1, x0, 0.0, 12.0)
    exact = np.array([free_gaussian_trajectory(x0, t, (0, 0, 0), (0, 0, 4), 1.0)
                      for t in traj.times])
    assert np.abs(traj.positions - exact).max() <= 1e-6
    assert np.all(np.diff(traj.times) > 0)
    steps, rejected, err = traj.integrator_stats
    assert steps == len(traj.samples) - 1 and err <= 1e-8


def test_tolerance_halving(G2):
    tol = 1e-8
    a = bohm.integrate_trajectory(G2, (0.3, 0.2, -0.1), 0.0, 20.0, tol).positions[-1]
    b = bohm.integrate_trajectory(G2, (0.3, 0.2, -0.1), 0.0, 20.0, tol / 2).positions[-1]
    assert np.abs(a - b).max() <= 10 * tol


def test_trajectory_needs_forward_time(G1):
    with pytest.raises(ValueError):
        bohm.integrate_trajectory(G1, (0, 0, 0), 1.0, 1.0)


# crossings

def test_first_crossing_single(G1):
    rec = bohm.first_crossing(G1, (0.1, 0.2, 0.3), 20.0)
    assert rec.direction == 1 and rec.ordinal == 1
    assert abs(np.linalg.norm(rec.exit_point) - 20.0) <= 1e-6 * 20
    exact = free_gaussian_exit_time((0.1, 0.2, 0.3), 20.0, (0, 0, 0), (0, 0, 4), 1.0)
    assert rec.time == pytest.approx(exact, abs=1e-6)


def test_first_crossing_start_outside(G1):
    with pytest.raises(ValueError):
        bohm.first_crossing(G1, (0, 0, 25.0), 20.0)


def test_first_crossing_budget_exhausted(G1):
    assert bohm.first_crossing(G1, (0, 0, 0), 20.0, t_budget=1.0) is None


def test_ballistic_crossing_times(G1):
    x0 = bohm.sample_initial(G1, 1000, 12)
    records = bohm.first_crossings(G1, x0, 20.0)
    times = np.array([r.time for r in records])
    exact = np.array([free_gaussian_exit_time(p, 20.0, (0, 0, 0), (0, 0, 4), 1.0) for p in x0])
    assert np.abs(times - exact).max() <= 1e-6
    assert all(r.direction == 1 for r in records)
    assert max(abs(np.linalg.norm(r.exit_point) - 20) for r in records) <= 2e-5
    # exit speed is ~N(4, 1/4) along z, so about 88% of exits fall in 5 +- 1
    within = np.mean(np.abs(times - 5.0) <= 1.0)
    predicted = stats.norm.cdf(1.0 / 0.5) - stats.norm.cdf((20 / 6 - 4) / 0.5)
    assert abs(within - predicted) <= 3 * math.sqrt(predicted * (1 - predicted) / 1000)


# ensembles

def test_ensemble_needs_enough_trajectories(G1):
    with pytest.raises(ValueError):
        bohm.crossing_statistics(G1, 10.0, Z30, 50, 1)


def test_full_sphere_ensemble(G1):
    st = bohm.crossing_statistics(G1, 20.0, Cone.full(), 10_000, 2)
    assert st.estimate == pytest.approx(1 - st.no_cross / st.n, abs=1e-15)
    assert abs(1 - st.estimate) <= st.ci95
    assert st.first_cross_in_cap == st.n - st.no_cross


def test_half_space_ensemble_at_rest(rest):
    st = bohm.crossing_statistics(rest, 5.0, Cone.from_degrees((1, 1, 0), 90), 2000, 3,
                                  t_budget=200.0)
    assert abs(st.estimate - 0.5) <= 3 * st.ci95


def test_multi_crossers_nonincreasing(G1):
    fractions = [bohm.crossing_statistics(G1, R, Z30, 1000, 4).multi_cross_fraction
                 for R in (10.0, 20.0, 40.0)]
    assert all(b <= a for a, b in zip(fractions, fractions[1:]))


def test_ensemble_determinism(G2):
    a = bohm.crossing_statistics(G2, 10.0, Z30, 300, 5)
    b = bohm.crossing_statistics(G2, 10.0, Z30, 300, 5)
    c = bohm.crossing_statistics(G2, 10.0, Z30, 300, 5, workers=2)
    assert a == b == c


def test_proportion_interval():
    assert bohm.proportion_ci95(500, 1000) == pytest.approx(1.96 * math.sqrt(0.25 / 1000), rel=2e-3)
    assert bohm.proportion_ci95(1000, 1000) > 0


def _with_fake_nodes(monkeypatch, threshold):
    """Report a node at t = 0 wherever x > threshold, so those starts abort."""
    real = bohm._velocity_batch

    def fake(packet, x, t, node_floor=bohm.NODE_FLOOR):
        v, bad = real(packet, x, t, node_floor)
        at_start = np.broadcast_to(np.asarray(t) == 0, bad.shape)
        return v, bad | (at_start & (x[..., 0] > threshold))
    monkeypatch.setattr(bohm, "_velocity_batch", fake)


def test_aborted_trajectories_are_excluded_and_counted(G1, monkeypatch):
    _with_fake_nodes(monkeypatch, 2.8)
    st = bohm.crossing_statistics(G1, 10.0, Z30, 2000, 6)
    assert 0 < st.aborted <= 20
    assert st.n + st.aborted == 2000
    assert st.estimate == st.first_cross_in_cap / st.n


def test_abort_fraction_is_enforced(G1, monkeypatch):
    _with_fake_nodes(monkeypatch, 1.5)
    with pytest.raises(bohm.EnsembleQualityError) as info:
        bohm.crossing_statistics(G1, 10.0, Z30, 2000, 6)
    assert info.value.stats.aborted > 20

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from clusterbell.wavepacket import (
    DetectorWindow,
    GaussianPacket,
    GridError,
    GridSpec,
    auto_grid,
    compare_with_oracle,
    detection_probability_closed,
    detection_probability_numeric,
    evolve,
    l_t,
    optimal_detector_center,
    propagate_free,
    riemann_lebesgue_overlap,
)

positive = st.floats(0.2, 5.0)


def brute_overlap(packet, det, t, n=2**16):
    """Direct quadrature of the analytically evolved packet against the window."""
    view = evolve(packet, t)
    span = 12 * max(view.sigma_t, det.delta, packet.sigma)
    lo = min(view.center, det.eta) - span
    hi = max(view.center, det.eta) + span
    x = np.linspace(lo, hi, n)
    amp = np.trapezoid(np.conj(det.wavefunction(x)) * view.wavefunction(x), x)
    return abs(amp) ** 2


def test_packet_validation():
    with pytest.raises(ValueError):
        GaussianPacket(sigma=0)
    with pytest.raises(ValueError):
        GaussianPacket(mass=-1)
    with pytest.raises(ValueError):
        DetectorWindow(0.0, delta=0)


def test_evolve_identity_at_zero():
    v = evolve(GaussianPacket(p0=2.0, sigma=1.5), 0.0)
    assert v.center == 0.0 and v.sigma_t == 1.5 and v.chirp == 0.0


def test_evolve_width_at_unit_chirp():
    p = GaussianPacket(p0=1.0, sigma=2.0, mass=3.0, hbar=0.5)
    v = evolve(p, p.time_for_tau(1.0))
    assert v.chirp == pytest.approx(1.0)
    assert v.sigma_t == pytest.approx(2.0 * math.sqrt(2), rel=1e-12)


def test_evolve_center_static_without_momentum():
    assert evolve(GaussianPacket(p0=0.0), 37.0).center == 0.0
    assert evolve(GaussianPacket(p0=-2.0, mass=4.0), 3.0).center == pytest.approx(-1.5)


@given(positive, positive, positive, st.floats(0, 50))
def test_sigma_t_formula(sigma, mass, hbar, t):
    p = GaussianPacket(sigma=sigma, mass=mass, hbar=hbar)
    v = evolve(p, t)
    expected = sigma**2 + hbar**2 * t**2 / (mass**2 * sigma**2)
    assert v.sigma_t**2 == pytest.approx(expected, rel=1e-12)
    assert v.sigma_t >= sigma


@pytest.mark.parametrize("tau", [0.0, 0.5, 3.0, 20.0])
def test_evolved_wavefunction_normalised_and_matches_propagator(tau):
    p = GaussianPacket(p0=1.3)
    t = p.time_for_tau(tau)
    det = DetectorWindow(0.0, 1.0)
    grid = auto_grid(p, det, t)
    x = grid.x
    analytic = evolve(p, t).wavefunction(x)
    assert np.sum(np.abs(analytic) ** 2) * grid.dx == pytest.approx(1.0, abs=1e-12)
    numeric = propagate_free(p.wavefunction(x), grid, t)
    # equal up to an x-independent phase
    assert abs(np.sum(np.conj(analytic) * numeric) * grid.dx) == pytest.approx(1.0, abs=1e-10)


def test_momentum_wavefunction_is_normalised_and_centred():
    p = GaussianPacket(p0=-0.7, sigma=0.8, hbar=1.3)
    k = np.linspace(-30, 30, 20001)
    dens = np.abs(p.momentum_wavefunction(k)) ** 2
    assert np.trapezoid(dens, k) == pytest.approx(1.0, abs=1e-12)
    assert np.trapezoid(k * dens, k) == pytest.approx(-0.7, abs=1e-10)


def test_l_t_values():
    assert l_t(1.0, 1.0, 0.0) == pytest.approx(math.sqrt(2))
    assert l_t(2.5, 2.5, 0.0) == pytest.approx(2.5 * math.sqrt(2))
    # large chirp, delta = sigma: L_t -> sigma_t
    for tau in (1e3, 1e4):
        st_ = math.sqrt(1 + tau**2)
        assert l_t(1.0, 1.0, tau) / st_ == pytest.approx(1.0, rel=2 / tau)
    # delta -> 0: L_t -> sigma_t
    assert l_t(1.0, 1e-6, 3.0) == pytest.approx(math.sqrt(10.0), rel=1e-10)
    ts = np.linspace(0, 50, 200)
    vals = [l_t(1.0, 0.4, t) for t in ts]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert l_t(1.0, 0.4, -3.0) == l_t(1.0, 0.4, 3.0)


def test_closed_form_identical_states():
    assert detection_probability_closed(GaussianPacket(p0=0.0), DetectorWindow(0.0, 1.0), 0.0) == pytest.approx(1.0, abs=1e-15)


def test_closed_form_short_time_regime_example():
    p = GaussianPacket(p0=1.0)
    prob = detection_probability_closed(p, DetectorWindow(1.0, 1.0), 0.01)
    assert prob == pytest.approx(math.exp(-1), rel=0.05)
    assert prob == pytest.approx(detection_probability_numeric(p, DetectorWindow(1.0, 1.0), 0.01), rel=1e-9)


def test_closed_form_long_time_adaptive_example():
    p = GaussianPacket(p0=1.0)
    t = 100.0
    prob = detection_probability_closed(p, DetectorWindow(t, 1.0), t)
    assert prob == pytest.approx(2 / t * math.exp(-1), rel=0.01)
    assert prob == pytest.approx(detection_probability_numeric(p, DetectorWindow(t, 1.0), t), rel=1e-9)


@pytest.mark.parametrize(
    "p0,delta,tau,eta",
    [(0.0, 1.0, 0.0, 0.0), (1.0, 0.25, 1.0, 0.5), (3.0, 2.0, 10.0, 3.0), (-1.0, 0.5, 4.0, -4.0), (2.0, 1.0, 0.3, 5.0)],
)
def test_closed_form_matches_direct_quadrature(p0, delta, tau, eta):
    p = GaussianPacket(p0=p0)
    det = DetectorWindow(eta, delta)
    assert detection_probability_closed(p, det, tau) == pytest.approx(brute_overlap(p, det, tau), rel=1e-8, abs=1e-15)


def test_closed_form_requires_origin_start():
    with pytest.raises(ValueError):
        detection_probability_closed(GaussianPacket(x0=1.0), DetectorWindow(0.0), 1.0)


def test_numeric_identity_case():
    p = GaussianPacket(p0=0.0)
    assert detection_probability_numeric(p, DetectorWindow(0.0, 1.0), 0.0) == pytest.approx(1.0, abs=1e-10)


def test_numeric_unit_conversions():
    # dimensionful parameters through the same dimensionless regime
    p = GaussianPacket(p0=2.0e-3, sigma=0.5e-3, mass=2.0, hbar=1.0e-6)
    t = p.time_for_tau(3.0)
    det = DetectorWindow(p.velocity * t, 0.25e-3)
    c = compare_with_oracle(p, det, t)
    assert c.within(1e-8)


def test_numeric_converges_under_refinement():
    p = GaussianPacket(p0=1.0)
    det = DetectorWindow(2.0, 0.5)
    grid = auto_grid(p, det, 2.0)
    a = detection_probability_numeric(p, det, 2.0, grid)
    b = detection_probability_numeric(p, det, 2.0, grid.refined(2))
    assert abs(a - b) <= 1e-9


def test_numeric_rejects_narrow_grid():
    p = GaussianPacket(p0=1.0)
    det = DetectorWindow(0.0, 1.0)
    with pytest.raises(GridError):
        detection_probability_numeric(p, det, 10.0, GridSpec(-5, 5, 4096))


def test_numeric_rejects_coarse_grid():
    p = GaussianPacket(p0=1.0)
    det = DetectorWindow(0.0, 0.25)
    with pytest.raises(GridError):
        detection_probability_numeric(p, det, 0.0, GridSpec(-20, 20, 256))


def test_numeric_rejects_tail_mass():
    # edges at exactly 8 widths pass coverage; a wider detector leaks beyond 1e-10
    p = GaussianPacket(p0=0.0)
    det = DetectorWindow(0.0, 1.0)
    ok = GridSpec(-8.0, 8.0, 512)
    detection_probability_numeric(p, det, 0.0, ok)
    with pytest.raises(GridError):
        detection_probability_numeric(p, det, 0.0, GridSpec(-7.9, 8.0, 512))


# --- properties -----------------------------------------------------------------

params = st.tuples(
    st.floats(0.3, 3.0),  # sigma
    st.floats(0.1, 3.0),  # delta
    st.floats(-4.0, 4.0),  # p0
    st.floats(0.0, 200.0),  # tau
    st.floats(-300.0, 300.0),  # eta
)


@settings(max_examples=300)
@given(params)
def test_probability_is_bounded(prm):
    sigma, delta, p0, tau, eta = prm
    p = GaussianPacket(p0=p0, sigma=sigma)
    t = p.time_for_tau(tau)
    prob = detection_probability_closed(p, DetectorWindow(eta, delta), t)
    assert 0.0 <= prob <= 1.0 + 1e-15


@settings(max_examples=300)
@given(params)
def test_mirror_symmetry(prm):
    sigma, delta, p0, tau, eta = prm
    p = GaussianPacket(p0=p0, sigma=sigma)
    det = DetectorWindow(eta, delta)
    t = p.time_for_tau(tau)
    a = detection_probability_closed(p, det, t)
    b = detection_probability_closed(p.mirrored(), det.mirrored(), t)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


@settings(max_examples=200)
@given(st.floats(1.0, 3.0), st.floats(0.0, 0.01))
def test_short_time_regime(eta, tau):
    p = GaussianPacket(p0=1.0)
    prob = detection_probability_closed(p, DetectorWindow(eta, 1.0), tau)
    assert prob == pytest.approx(math.exp(-0.5) * math.exp(-(eta**2) / 2), rel=0.05)


@settings(max_examples=200)
@given(st.floats(100.0, 1e4), st.floats(0.1, 1.0), st.floats(-1.5, 1.5))
def test_long_time_limits(tau, delta, p0):
    # corrections are O(p0^2 delta^2 (delta^2 + delta^4) / tau^2): keep delta <= sigma
    p = GaussianPacket(p0=p0)
    static = tau * detection_probability_closed(p, DetectorWindow(0.0, delta), tau)
    adaptive = tau * detection_probability_closed(p, DetectorWindow(p0 * tau, delta), tau)
    assert static == pytest.approx(2 * delta * math.exp(-(p0**2)), rel=0.01)
    assert adaptive == pytest.approx(2 * delta * math.exp(-(p0**2) * delta**2), rel=0.01)


def test_long_time_static_with_offset_detector_drifts():
    # a fixed detector away from the origin carries an exp(2 eta p0 / tau) correction
    p = GaussianPacket(p0=1.0)
    tau = 100.0
    val = tau * detection_probability_closed(p, DetectorWindow(1.0, 1.0), tau)
    assert val / (2 * math.exp(-1)) == pytest.approx(math.exp(2 / tau), rel=2e-3)


@settings(max_examples=200)
@given(st.floats(0.3, 3.0), st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(0.0, 100.0))
def test_optimal_center_matches_brute_force_scan(sigma, delta, p0, tau):
    p = GaussianPacket(p0=p0, sigma=sigma)
    t = p.time_for_tau(tau)
    best = optimal_detector_center(p, delta, t)
    h = 1e-4 * max(1.0, abs(best))
    mid = detection_probability_closed(p, DetectorWindow(best, delta), t)
    assert mid >= detection_probability_closed(p, DetectorWindow(best - h, delta), t)
    assert mid >= detection_probability_closed(p, DetectorWindow(best + h, delta), t)


@settings(max_examples=300)
@given(st.floats(0.3, 3.0), st.floats(0.05, 3.0), st.floats(0.1, 3.0), st.floats(0.0, 300.0), st.floats(0.0, 1.0))
def test_adaptive_beats_static_outside_mirror_band(sigma, delta, p0, tau, frac):
    """Adaptive wins against every static eta0 in [sigma, v t (s^2 - d^2)/(s^2 + d^2)]."""
    p = GaussianPacket(p0=p0, sigma=sigma)
    t = p.time_for_tau(tau)
    vt = p.velocity * t
    upper = vt * (sigma**2 - delta**2) / (sigma**2 + delta**2)
    assume(upper > sigma)
    eta0 = sigma + frac * (upper - sigma)
    adaptive = detection_probability_closed(p, DetectorWindow(vt, delta), t)
    static = detection_probability_closed(p, DetectorWindow(eta0, delta), t)
    assert adaptive >= static * (1 - 1e-12)


def test_adaptive_can_lose_to_static_for_wide_windows():
    # with delta = sigma the peak sits at vt/2, so a static window there beats tracking
    p = GaussianPacket(p0=1.0)
    t = 100.0
    adaptive = detection_probability_closed(p, DetectorWindow(t, 1.0), t)
    static = detection_probability_closed(p, DetectorWindow(t / 2, 1.0), t)
    assert static > adaptive
    assert static / adaptive == pytest.approx(math.exp(0.5), rel=1e-3)


def test_riemann_lebesgue_gaussian_shift():
    grid = GridSpec(-40, 40, 4096)
    f = GaussianPacket(p0=0.0, sigma=1.3).wavefunction(grid.x)
    assert riemann_lebesgue_overlap(f, f, 0.0, grid) == pytest.approx(1.0, abs=1e-12)
    for y in (0.37, 1.0, 2.5, 6.1):
        assert abs(riemann_lebesgue_overlap(f, f, y, grid)) == pytest.approx(math.exp(-(y**2) / (4 * 1.3**2)), abs=1e-8)


def test_riemann_lebesgue_decays_with_oscillation():
    grid = GridSpec(-60, 60, 8192)
    f = GaussianPacket(p0=2.0).wavefunction(grid.x)
    g = GaussianPacket(p0=-1.0, sigma=2.0).wavefunction(grid.x)
    mags = [abs(riemann_lebesgue_overlap(f, g, y, grid)) for y in (0.0, 3.0, 6.0, 12.0, 24.0)]
    assert all(b < a for a, b in zip(mags, mags[1:]))
    assert mags[-1] < 1e-10


def test_riemann_lebesgue_disjoint_supports_exactly_zero():
    grid = GridSpec(-10, 10, 2000)
    x = grid.x
    f = np.where(np.abs(x) < 1.0, np.cos(np.pi * x / 2) ** 2, 0.0).astype(complex)
    f /= math.sqrt(np.sum(np.abs(f) ** 2) * grid.dx)
    assert riemann_lebesgue_overlap(f, f, 0.0, grid) == pytest.approx(1.0, abs=1e-12)
    assert riemann_lebesgue_overlap(f, f, 2.5, grid) == 0
    assert riemann_lebesgue_overlap(f, f, -3.0, grid) == 0
    assert riemann_lebesgue_overlap(f, f, 50.0, grid) == 0


def test_riemann_lebesgue_grid_mismatch():
    grid = GridSpec(-10, 10, 256)
    with pytest.raises(ValueError):
        riemann_lebesgue_overlap(np.ones(256), np.ones(128), 0.0, grid)

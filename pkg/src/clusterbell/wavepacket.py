"""Free 1-D Gaussian wave packets and their overlap with Gaussian detector
windows.

Two independent routes to the detection probability
``|<U_t G_p0 | phi_eta>|^2`` are provided:

* :func:`detection_probability_closed`, the Gaussian-integral closed form;
* :func:`detection_probability_numeric`, which samples the initial packet,
  applies the exact free propagator ``exp(-i hbar k^2 t / 2m)`` in Fourier
  space and integrates against the detector on the grid.

Units default to hbar = m = sigma = 1. The dimensionless group that sets the
regime is ``tau = hbar t / (m sigma^2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# analytic tail mass allowed outside a quadrature grid
TAIL_MASS_TOL = 1e-10
# widths covered on each side of every centre by auto_grid
GRID_HALF_WIDTHS = 10.0
MIN_GRID_HALF_WIDTHS = 8.0
POINTS_PER_WIDTH = 16


class GridError(ValueError):
    """A quadrature grid cannot represent the requested functions."""


@dataclass(frozen=True)
class GaussianPacket:
    p0: float = 0.0
    sigma: float = 1.0
    mass: float = 1.0
    hbar: float = 1.0
    x0: float = 0.0

    def __post_init__(self):
        for name in ("sigma", "mass", "hbar"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")

    @property
    def velocity(self) -> float:
        return self.p0 / self.mass

    def mirrored(self) -> "GaussianPacket":
        """Partner packet with opposite mean momentum and centre."""
        return GaussianPacket(-self.p0, self.sigma, self.mass, self.hbar, -self.x0)

    def tau(self, t: float) -> float:
        return self.hbar * t / (self.mass * self.sigma**2)

    def time_for_tau(self, tau: float) -> float:
        return tau * self.mass * self.sigma**2 / self.hbar

    def wavefunction(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        norm = (math.pi * self.sigma**2) ** -0.25
        return norm * np.exp(-((x - self.x0) ** 2) / (2 * self.sigma**2) + 1j * self.p0 * x / self.hbar)

    def momentum_wavefunction(self, p: np.ndarray) -> np.ndarray:
        """Fourier transform, up to the phase from x0."""
        p = np.asarray(p, dtype=float)
        norm = (self.sigma**2 / (math.pi * self.hbar**2)) ** 0.25
        return norm * np.exp(-(self.sigma**2) / (2 * self.hbar**2) * (p - self.p0) ** 2) * np.exp(-1j * p * self.x0 / self.hbar)


@dataclass(frozen=True)
class EvolvedPacketView:
    packet: GaussianPacket
    time: float

    @property
    def center(self) -> float:
        return self.packet.x0 + self.packet.velocity * self.time

    @property
    def chirp(self) -> float:
        return self.packet.tau(self.time)

    @property
    def sigma_t(self) -> float:
        return self.packet.sigma * math.sqrt(1.0 + self.chirp**2)

    def wavefunction(self, x: np.ndarray) -> np.ndarray:
        """Evolved packet with x-independent phases dropped."""
        p = self.packet
        x = np.asarray(x, dtype=float)
        st2 = self.sigma_t**2
        return (math.pi * st2) ** -0.25 * np.exp(
            -((x - self.center) ** 2) / (2 * st2) * (1 - 1j * self.chirp) + 1j * p.p0 * x / p.hbar
        )


def evolve(packet: GaussianPacket, t: float) -> EvolvedPacketView:
    return EvolvedPacketView(packet, float(t))


@dataclass(frozen=True)
class DetectorWindow:
    """Gaussian projector of width ``delta`` centred at ``eta`` (zero momentum)."""

    eta: float
    delta: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"detector width must be positive, got {self.delta!r}")

    def mirrored(self) -> "DetectorWindow":
        return DetectorWindow(-self.eta, self.delta)

    def wavefunction(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (math.pi * self.delta**2) ** -0.25 * np.exp(-((x - self.eta) ** 2) / (2 * self.delta**2))


def l_t(sigma: float, delta: float, t: float, m: float = 1.0, hbar: float = 1.0) -> float:
    """Overlap length scale ((sigma_t^2 + delta^2)^2 + (hbar t/m)^2 (delta/sigma)^4)^(1/4)."""
    if min(sigma, delta, m, hbar) <= 0:
        raise ValueError("sigma, delta, m and hbar must be positive")
    st2 = sigma**2 + (hbar * t / (m * sigma)) ** 2
    return ((st2 + delta**2) ** 2 + (hbar * t / m) ** 2 * (delta / sigma) ** 4) ** 0.25


def detection_exponents(packet: GaussianPacket, det: DetectorWindow, t: float) -> tuple[float, float, float, float]:
    """Prefactor and the three exponents of the closed form.

    Returns ``(prefactor, e_momentum, e_offset, e_chirp)`` with
    probability ``prefactor * exp(-(e_momentum + e_offset + e_chirp))``.
    """
    if packet.x0 != 0.0:
        raise ValueError("closed form assumes packets start at x0 = 0")
    sigma, delta, m, hbar, p0 = packet.sigma, det.delta, packet.mass, packet.hbar, packet.p0
    eta = det.eta
    st2 = sigma**2 + (hbar * t / (m * sigma)) ** 2
    L = l_t(sigma, delta, t, m, hbar)
    L2, L4 = L**2, L**4
    pref = 2 * delta * math.sqrt(st2) / L2
    e_momentum = p0**2 * delta**4 * st2 / (hbar**2 * L4)
    e_offset = (eta - p0 * t / m) ** 2 * (delta**2 + st2) / L4
    e_chirp = delta**2 / L4 * (p0 * sigma**2 / hbar + hbar * t * eta / (m * sigma**2)) ** 2
    return pref, e_momentum, e_offset, e_chirp


def detection_probability_closed(packet: GaussianPacket, det: DetectorWindow, t: float) -> float:
    pref, *exps = detection_exponents(packet, det, t)
    return pref * math.exp(-sum(exps))


def optimal_detector_center(packet: GaussianPacket, delta: float, t: float) -> float:
    """Detector centre maximising the closed form at time ``t``.

    The probability is Gaussian in ``eta`` with its peak at
    ``x0 + v t sigma^2 / (sigma^2 + delta^2)``: a zero-momentum window prefers
    the slow, trailing part of the chirped packet, so the peak lags the
    ballistic centre ``v t`` unless ``delta << sigma``.
    """
    s2 = packet.sigma**2
    return packet.x0 + packet.velocity * t * s2 / (s2 + delta**2)


# --- numeric oracle -------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid ``x_min + k*dx``, ``k = 0..n-1``, ``dx = (x_max - x_min)/n``."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("grid needs x_max > x_min")
        if self.n < 16:
            raise ValueError("grid needs at least 16 points")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.x_min, self.x_max, self.n * factor)


def _gaussian_tail_mass(center: float, width: float, lo: float, hi: float) -> float:
    """Mass of exp(-(x-c)^2/w^2)/(sqrt(pi) w) outside [lo, hi]."""
    return 0.5 * (math.erfc((center - lo) / width) + math.erfc((hi - center) / width))


def _packet_geometry(packet: GaussianPacket, det: DetectorWindow, t: float):
    view = evolve(packet, t)
    return [(packet.x0, packet.sigma), (view.center, view.sigma_t), (det.eta, det.delta)]


def auto_grid(packet: GaussianPacket, det: DetectorWindow, t: float, points_per_width: int = POINTS_PER_WIDTH) -> GridSpec:
    """Smallest power-of-two grid meeting the oracle's coverage and resolution rules."""
    shapes = _packet_geometry(packet, det, t)
    lo = min(c - GRID_HALF_WIDTHS * w for c, w in shapes)
    hi = max(c + GRID_HALF_WIDTHS * w for c, w in shapes)
    dx = _max_step(packet, det, points_per_width)
    n = 1 << max(4, math.ceil(math.log2((hi - lo) / dx)))
    return GridSpec(lo, hi, n)


def _max_step(packet: GaussianPacket, det: DetectorWindow, points_per_width: int = POINTS_PER_WIDTH) -> float:
    dx = min(packet.sigma, det.delta) / points_per_width
    # Nyquist for the momentum band |p0| + 6 hbar/sigma, with a factor 2 margin
    k_max = abs(packet.p0) / packet.hbar + 6.0 / packet.sigma
    return min(dx, math.pi / (2 * k_max))


def check_grid(packet: GaussianPacket, det: DetectorWindow, t: float, grid: GridSpec) -> float:
    """Raise GridError if ``grid`` is too coarse or too narrow; return worst tail mass."""
    if grid.dx > _max_step(packet, det) * (1 + 1e-12):
        raise GridError(f"grid step {grid.dx:.4g} does not resolve widths/momenta (need <= {_max_step(packet, det):.4g})")
    worst = 0.0
    for c, w in _packet_geometry(packet, det, t):
        if c - MIN_GRID_HALF_WIDTHS * w < grid.x_min or c + MIN_GRID_HALF_WIDTHS * w > grid.x_max:
            raise GridError(f"grid [{grid.x_min:.4g}, {grid.x_max:.4g}] does not cover 8 widths around {c:.4g} (width {w:.4g})")
        worst = max(worst, _gaussian_tail_mass(c, w, grid.x_min, grid.x_max))
    if worst > TAIL_MASS_TOL:
        raise GridError(f"tail mass {worst:.3g} outside the grid exceeds {TAIL_MASS_TOL:g}")
    return worst


def propagate_free(psi0: np.ndarray, grid: GridSpec, t: float, mass: float = 1.0, hbar: float = 1.0) -> np.ndarray:
    """Exact free evolution of a sampled, effectively periodic wave function."""
    k = 2 * np.pi * np.fft.fftfreq(grid.n, d=grid.dx)
    phase = np.exp(-1j * hbar * k**2 * t / (2 * mass))
    return np.fft.ifft(np.fft.fft(psi0) * phase)


def detection_probability_numeric(packet: GaussianPacket, det: DetectorWindow, t: float, grid: GridSpec | None = None) -> float:
    if grid is None:
        grid = auto_grid(packet, det, t)
    check_grid(packet, det, t, grid)
    x = grid.x
    psi_t = propagate_free(packet.wavefunction(x), grid, t, packet.mass, packet.hbar)
    amp = np.sum(np.conj(det.wavefunction(x)) * psi_t) * grid.dx
    return float(abs(amp) ** 2)


@dataclass(frozen=True)
class OracleComparison:
    closed: float
    numeric: float
    grid: GridSpec

    @property
    def abs_residual(self) -> float:
        return abs(self.closed - self.numeric)

    @property
    def rel_residual(self) -> float:
        return self.abs_residual / max(abs(self.numeric), 1e-300)

    def within(self, rel: float = 1e-6, abs_floor: float = 1e-14, small: float = 1e-12) -> bool:
        if self.numeric < small and self.closed < small:
            return self.abs_residual <= abs_floor
        return self.rel_residual <= rel


def compare_with_oracle(packet: GaussianPacket, det: DetectorWindow, t: float, grid: GridSpec | None = None) -> OracleComparison:
    grid = grid or auto_grid(packet, det, t)
    return OracleComparison(
        detection_probability_closed(packet, det, t),
        detection_probability_numeric(packet, det, t, grid),
        grid,
    )


def riemann_lebesgue_overlap(f: np.ndarray, g: np.ndarray, y: float, grid: GridSpec) -> complex:
    """Return the overlap integral of f(x + y) g*(x) over the grid.

    Shifts that land on grid points are applied by index with zero fill, so
    functions with disjoint supports give exactly 0. Other shifts go through
    momentum space, ``int dk e^{iky} f~(k) g~*(k)``, on a zero-padded grid.
    """
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if f.shape != (grid.n,) or g.shape != (grid.n,):
        raise ValueError(f"sampled functions must both have shape ({grid.n},), got {f.shape} and {g.shape}")
    if abs(y) >= grid.x_max - grid.x_min:
        return 0j
    steps = y / grid.dx
    if abs(steps - round(steps)) < 1e-9:
        s = int(round(steps))
        shifted = np.zeros_like(f)
        if abs(s) < grid.n:
            if s >= 0:
                shifted[: grid.n - s] = f[s:]
            else:
                shifted[-s:] = f[: grid.n + s]
        return complex(np.sum(shifted * np.conj(g)) * grid.dx)
    n_pad = 2 * grid.n
    k = 2 * np.pi * np.fft.fftfreq(n_pad, d=grid.dx)
    ff = np.fft.fft(f, n_pad)
    gf = np.fft.fft(g, n_pad)
    # Parseval on the padded grid: sum_x a b* = sum_k A B* / n_pad
    return complex(np.sum(np.exp(1j * k * y) * ff * np.conj(gf)) / n_pad * grid.dx)

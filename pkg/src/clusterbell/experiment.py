"""Spatially damped CHSH experiments with two receding wave packets.

Particle 1 carries mean momentum +p0 and is probed by a detector window at
+eta(t); particle 2 is its mirror image (-p0, -eta(t)). Spin and space
factorise, so every mean value is ``p_joint(t) * <spin observable>``.

Monte Carlo model
-----------------
Each trial draws two independent detection events with the single-side
probabilities. On a coincidence the spin outcomes follow the singlet law::

    P(s1, s2) = (1 - s1 s2 a.b) / 4

This is the unique law on {+-1}^2 with unbiased marginals and correlator
``-a.b``. Every trial consumes one Philox counter block (four 64-bit words),
so any chunking or thread count reproduces the same stream.
"""
from __future__ import annotations

import hashlib
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .spin_chsh import (
    CHSH_SIGNS,
    ChshSetting,
    LhvModel,
    SpinDirection,
    chsh_value,
    tsirelson_setting,
    singlet_state,
    spin_correlator,
)
from .wavepacket import DetectorWindow, GaussianPacket, detection_probability_closed

THREADS_ENV = "CLUSTERBELL_THREADS"
CHUNK_TRIALS = 1 << 18
CLASSICAL_BOUND = 2.0


# --- detector placement ---------------------------------------------------


@dataclass(frozen=True)
class Static:
    eta: float = 0.0


@dataclass(frozen=True)
class Adaptive:
    """Track the ballistic centre, eta(t) = p0 t / m."""


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear eta(t) through (time, eta) knots."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(t), float(e)) for t, e in self.points)
        if not pts:
            raise ValueError("schedule needs at least one (time, eta) point")
        times = [t for t, _ in pts]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("schedule times must be strictly increasing")
        object.__setattr__(self, "points", pts)

    def eta_at(self, t: float) -> float:
        times = [p[0] for p in self.points]
        if not times[0] <= t <= times[-1]:
            raise ValueError(f"schedule covers t in [{times[0]}, {times[-1]}], not t={t}")
        return float(np.interp(t, times, [p[1] for p in self.points]))


DetectorStrategy = Union[Static, Adaptive, Schedule]


def resolve_eta(strategy: DetectorStrategy, packet: GaussianPacket, t: float) -> float:
    """Detector centre for the +p0 particle at time t."""
    if isinstance(strategy, Static):
        return strategy.eta
    if isinstance(strategy, Adaptive):
        return packet.velocity * t
    if isinstance(strategy, Schedule):
        return strategy.eta_at(t)
    raise TypeError(f"unknown detector strategy {strategy!r}")


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    sigma: float = 1.0
    delta: float = 1.0
    p0: float = 1.0
    mass: float = 1.0
    hbar: float = 1.0
    setting: ChshSetting = field(default_factory=tsirelson_setting)
    strategy: DetectorStrategy = field(default_factory=Adaptive)
    times: tuple[float, ...] = (0.0,)
    trials: int = 100_000
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma", "delta", "mass", "hbar"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        times = tuple(float(t) for t in np.atleast_1d(self.times))
        if not times or any(t < 0 for t in times):
            raise ValueError("times must be a nonempty list of nonnegative values")
        object.__setattr__(self, "times", times)
        if int(self.trials) < 1:
            raise ValueError("trials must be >= 1")
        object.__setattr__(self, "trials", int(self.trials))
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def packet(self) -> GaussianPacket:
        return GaussianPacket(self.p0, self.sigma, self.mass, self.hbar)

    def detector(self, t: float) -> DetectorWindow:
        return DetectorWindow(resolve_eta(self.strategy, self.packet, t), self.delta)

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def side_probabilities(cfg: ExperimentConfig, t: float) -> tuple[float, float]:
    packet, det = cfg.packet, cfg.detector(t)
    p_plus = detection_probability_closed(packet, det, t)
    p_minus = detection_probability_closed(packet.mirrored(), det.mirrored(), t)
    return p_plus, p_minus


def joint_detection_probability(cfg: ExperimentConfig, t: float) -> float:
    p_plus, p_minus = side_probabilities(cfg, t)
    return p_plus * p_minus


def damped_correlator(cfg: ExperimentConfig, t: float, a: SpinDirection, b: SpinDirection) -> float:
    return joint_detection_probability(cfg, t) * spin_correlator(singlet_state(), a, b)


def damped_chsh(cfg: ExperimentConfig, t: float) -> float:
    return joint_detection_probability(cfg, t) * chsh_value(singlet_state(), cfg.setting)


def visibility_threshold(setting: ChshSetting | None = None) -> float:
    """Joint detection probability below which the damped CHSH value drops under 2."""
    s = abs(chsh_value(singlet_state(), setting or tsirelson_setting()))
    return CLASSICAL_BOUND / s if s > 0 else math.inf


# --- Monte Carlo ------------------------------------------------------------


class SingletSource:
    """Spin outcomes drawn from the singlet joint law."""

    def outcomes(self, setting: ChshSetting | None, i: int, j: int, a, b, u_a, u_b):
        ab = a.dot(b)
        s1 = np.where(u_a < 0.5, 1, -1).astype(np.int8)
        same = u_b < 0.5 * (1.0 - ab)
        s2 = np.where(same, s1, -s1).astype(np.int8)
        return s1, s2


@dataclass(frozen=True)
class LhvSource:
    """Outcomes predetermined by a hidden variable drawn from ``model``."""

    model: LhvModel

    def outcomes(self, setting, i, j, a, b, u_a, u_b):
        if i is None or j is None:
            raise ValueError("LHV outcomes need CHSH setting indices")
        cdf = np.cumsum(self.model.weights)
        lam = np.minimum(np.searchsorted(cdf, u_a, side="right"), len(cdf) - 1)
        asg = self.model.assignments
        return asg[lam, i], asg[lam, 2 + j]


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        n = int(threads)
    else:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"thread count must be a positive integer, got {n}")
    return n


def stream_key(seed: int, *labels) -> list[int]:
    """Philox key for one independent stream; labels are hashed by value."""
    h = hashlib.blake2b(digest_size=8)
    for lab in labels:
        if isinstance(lab, float):
            h.update(struct.pack("<d", lab))
        else:
            h.update(repr(lab).encode())
        h.update(b"|")
    return [int(seed) % 2**64, int.from_bytes(h.digest(), "little")]


def trial_uniforms(key: list[int], start: int, n: int) -> np.ndarray:
    """Uniforms for trials [start, start+n), shape (n, 4); slot order:
    detect side 1, detect side 2, spin draw a, spin draw b."""
    bg = np.random.Philox(key=key)
    bg.advance(start)
    raw = bg.random_raw(4 * n).reshape(n, 4)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class CorrelatorSample:
    trials: int
    coincidences: int
    n_same: int

    @property
    def flagged(self) -> bool:
        """No coincidences: the post-selected correlator is undefined."""
        return self.coincidences == 0

    @property
    def correlator(self) -> float:
        if self.flagged:
            return math.nan
        return (2 * self.n_same - self.coincidences) / self.coincidences

    @property
    def std_error(self) -> float:
        if self.flagged:
            return math.inf
        e = self.correlator
        return math.sqrt(max(0.0, 1.0 - e * e) / self.coincidences)

    @property
    def unconditional(self) -> float:
        """Sum of s1*s2 over all trials, undetected pairs counting 0."""
        return (2 * self.n_same - self.coincidences) / self.trials


def _count_chunk(p_plus, p_minus, key, start, n, source, setting, i, j, a, b):
    u = trial_uniforms(key, start, n)
    hit = (u[:, 0] < p_plus) & (u[:, 1] < p_minus)
    n_hit = int(np.count_nonzero(hit))
    if n_hit == 0:
        return 0, 0
    s1, s2 = source.outcomes(setting, i, j, a, b, u[hit, 2], u[hit, 3])
    return n_hit, int(np.count_nonzero(s1 == s2))


def _sample_counts(p_plus, p_minus, trials, key, source, setting, i, j, a, b, threads) -> CorrelatorSample:
    starts = range(0, trials, CHUNK_TRIALS)
    jobs = [(p_plus, p_minus, key, s, min(CHUNK_TRIALS, trials - s), source, setting, i, j, a, b) for s in starts]
    n_threads = thread_count(threads)
    if n_threads == 1 or len(jobs) == 1:
        results = [_count_chunk(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(lambda job: _count_chunk(*job), jobs))
    # integer totals: independent of chunk order
    return CorrelatorSample(trials, sum(r[0] for r in results), sum(r[1] for r in results))


def sample_run(
    cfg: ExperimentConfig,
    t: float,
    a: SpinDirection,
    b: SpinDirection,
    *,
    source=None,
    pair: tuple[int, int] | None = None,
    threads: int | None = None,
) -> CorrelatorSample:
    """Simulate ``cfg.trials`` emitted pairs at time t for directions (a, b).

    ``pair`` gives the CHSH setting indices (needed by LHV sources); the random
    stream is keyed by (seed, t, pair or directions).
    """
    p_plus, p_minus = side_probabilities(cfg, t)
    label = pair if pair is not None else (a.components, b.components)
    key = stream_key(cfg.seed, float(t), label)
    i, j = pair if pair is not None else (None, None)
    return _sample_counts(p_plus, p_minus, cfg.trials, key, source or SingletSource(), cfg.setting, i, j, a, b, threads)


@dataclass(frozen=True)
class RunRecord:
    time: float
    p_side_plus: float
    p_side_minus: float
    p_joint: float
    damped_chsh: float
    trials: int
    coincidences: int
    empirical_chsh: float
    std_error: float
    unconditional_chsh: float
    flagged: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def estimate_chsh(cfg: ExperimentConfig, t: float, *, source=None, threads: int | None = None) -> RunRecord:
    """Post-selected CHSH estimate from four runs of ``cfg.trials`` pairs each."""
    p_plus, p_minus = side_probabilities(cfg, t)
    samples = []
    for idx, (a, b) in enumerate(cfg.setting.pairs()):
        samples.append(sample_run(cfg, t, a, b, source=source, pair=divmod(idx, 2), threads=threads))
    flagged = any(s.flagged for s in samples)
    if flagged:
        s_hat, se = math.nan, math.inf
    else:
        s_hat = math.fsum(sign * s.correlator for sign, s in zip(CHSH_SIGNS, samples))
        se = math.sqrt(math.fsum(s.std_error**2 for s in samples))
    return RunRecord(
        time=float(t),
        p_side_plus=p_plus,
        p_side_minus=p_minus,
        p_joint=p_plus * p_minus,
        damped_chsh=damped_chsh(cfg, t),
        trials=4 * cfg.trials,
        coincidences=sum(s.coincidences for s in samples),
        empirical_chsh=s_hat,
        std_error=se,
        unconditional_chsh=math.fsum(sign * s.unconditional for sign, s in zip(CHSH_SIGNS, samples)),
        flagged=flagged,
    )


# --- statistics cost ----------------------------------------------------------


def coincidences_for_significance(setting: ChshSetting, k: float) -> float:
    """Coincidences per setting pair so that (S - 2) / SE(S) reaches k.

    Normal approximation: each post-selected correlator has variance
    (1 - E^2)/n, and the four estimates are independent.
    """
    rho = singlet_state()
    corr = [spin_correlator(rho, a, b) for a, b in setting.pairs()]
    s = abs(math.fsum(sign * e for sign, e in zip(CHSH_SIGNS, corr)))
    if s <= CLASSICAL_BOUND:
        raise ValueError(f"setting gives |S| = {s:.6g}, no violation to resolve")
    var_sum = math.fsum(1.0 - e * e for e in corr)
    return k * k * var_sum / (s - CLASSICAL_BOUND) ** 2


def required_trials(cfg: ExperimentConfig, t: float, k: float = 5.0) -> float:
    """Real-valued trial count per setting pair; inf when nothing is detected."""
    p = joint_detection_probability(cfg, t)
    n = coincidences_for_significance(cfg.setting, k)
    if p <= 0.0:
        return math.inf
    return n / p


def trials_for_significance(cfg: ExperimentConfig, t: float, k: float = 5.0) -> int | float:
    """Emitted pairs per setting pair needed for a k-sigma CHSH violation at time t.

    Scales as 1/p_joint(t); returns ``math.inf`` if p_joint underflows to 0.
    """
    n = required_trials(cfg, t, k)
    return n if math.isinf(n) else math.ceil(n)


def fit_power_law(xs, ys) -> float:
    """Least-squares exponent of ys ~ xs**alpha."""
    alpha, _ = np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)
    return float(alpha)

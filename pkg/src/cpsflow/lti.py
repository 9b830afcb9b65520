"""LTI plant, Luenberger observer, residual statistics and bad-data detection.

Plant under additive attacks::

    x[k+1] = A x[k] + B (u[k] + du[k]) + v[k]
    yb[k]  = C x[k] + eta[k] + dy[k]

Observer and residual::

    xh[k+1] = A xh[k] + B u[k] + L (yb[k] - C xh[k])
    r[k]    = yb[k] - C xh[k]

The observer is driven by the commanded input ``u`` (what the controller
sent), so an actuator attack enters the estimation error through
``B du``; the error then follows
``e[k+1] = (A - LC) e[k] + v[k] - L eta[k] - L dy[k] + B du[k]``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, NonConvergent, NonPositiveSigma, UnstableObserver

SYMMETRY_TOL = 1e-12
GENERATOR = "numpy.random.Generator(PCG64); v then eta drawn with standard_normal, scaled by an eigen-factor of R1 / R2"


def _matrix(a, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix")
    return arr


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0


@dataclass(frozen=True, eq=False)
class LtiSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    R1: np.ndarray
    R2: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "R1", "R2"):
            object.__setattr__(self, name, _matrix(getattr(self, name), name))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise DimensionMismatch(f"B needs {n} rows, got {self.B.shape}")
        if self.C.shape[1] != n:
            raise DimensionMismatch(f"C needs {n} columns, got {self.C.shape}")
        m = self.C.shape[0]
        if self.R1.shape != (n, n):
            raise DimensionMismatch(f"R1 must be {n}x{n}, got {self.R1.shape}")
        if self.R2.shape != (m, m):
            raise DimensionMismatch(f"R2 must be {m}x{m}, got {self.R2.shape}")
        for name in ("R1", "R2"):
            R = getattr(self, name)
            if np.max(np.abs(R - R.T), initial=0.0) > SYMMETRY_TOL:
                raise ValueError(f"{name} is not symmetric")
            if R.size and np.min(np.linalg.eigvalsh(R)) < -1e-10:
                raise ValueError(f"{name} is not positive semidefinite")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def l(self) -> int:  # noqa: E743 - control dimension
        return self.B.shape[1]


def error_matrix(sys: LtiSystem, gain: np.ndarray) -> np.ndarray:
    gain = _matrix(gain, "L")
    if gain.shape != (sys.n, sys.m):
        raise DimensionMismatch(f"observer gain must be {sys.n}x{sys.m}, got {gain.shape}")
    return sys.A - gain @ sys.C


@dataclass(frozen=True, eq=False)
class Observer:
    gain: np.ndarray
    x_hat0: np.ndarray

    @classmethod
    def for_system(cls, sys: LtiSystem, gain, x_hat0=None) -> "Observer":
        """Validate that ``A - LC`` is Schur stable and build the observer."""
        gain = _matrix(gain, "L")
        rho = spectral_radius(error_matrix(sys, gain))
        if rho >= 1.0:
            raise UnstableObserver(f"spectral radius of A - LC is {rho:.6g} >= 1")
        x0 = np.zeros(sys.n) if x_hat0 is None else np.asarray(x_hat0, dtype=float).reshape(sys.n)
        return cls(gain, x0)


@dataclass(frozen=True)
class AttackSignal:
    """Additive sensor (``dy``) and actuator (``du``) attacks indexed by step."""

    sensor: Optional[Callable[[int], Sequence[float]]] = None
    actuator: Optional[Callable[[int], Sequence[float]]] = None

    @classmethod
    def none(cls) -> "AttackSignal":
        return cls()

    @classmethod
    def bias(cls, sensor=None, actuator=None, start: int = 0, stop: Optional[int] = None):
        """Constant offsets active on steps ``start <= k < stop``."""
        def window(vec):
            if vec is None:
                return None
            vec = np.asarray(vec, dtype=float)
            zero = np.zeros_like(vec)
            return lambda k: vec if k >= start and (stop is None or k < stop) else zero
        return cls(window(sensor), window(actuator))

    def arrays(self, steps: int, m: int, l: int) -> tuple:
        dy = np.zeros((steps, m))
        du = np.zeros((steps, l))
        if self.sensor is not None:
            for k in range(steps):
                dy[k] = self.sensor(k)
        if self.actuator is not None:
            for k in range(steps):
                du[k] = self.actuator(k)
        return dy, du


@dataclass(eq=False)
class Trajectory:
    """Per-step signals; ``x`` and ``x_hat`` carry one extra final row."""

    x: np.ndarray
    x_hat: np.ndarray
    y_bar: np.ndarray
    u: np.ndarray
    u_bar: np.ndarray
    r: np.ndarray
    v: np.ndarray
    eta: np.ndarray
    dy: np.ndarray
    du: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.r.shape[0]

    @property
    def error(self) -> np.ndarray:
        return self.x - self.x_hat


def noise_factor(R: np.ndarray) -> np.ndarray:
    """``F`` with ``F F^T = R`` for a symmetric PSD ``R`` (singular allowed)."""
    w, V = np.linalg.eigh(R)
    return V * np.sqrt(np.clip(w, 0.0, None))


def _controller_inputs(controller, sys: LtiSystem, steps: int):
    """Split ``controller`` into a feedback gain K and an open-loop sequence."""
    K = np.zeros((sys.l, sys.n))
    u_ext = np.zeros((steps, sys.l))
    if controller is None:
        return K, u_ext
    arr = np.asarray(controller, dtype=float)
    if arr.ndim == 2 and arr.shape == (sys.l, sys.n) and not (steps == sys.l and sys.l != sys.n):
        return arr, u_ext
    arr = arr.reshape(-1, sys.l) if arr.ndim <= 2 else arr
    if arr.shape != (steps, sys.l):
        raise DimensionMismatch(
            f"controller must be an {sys.l}x{sys.n} feedback gain or a {steps}x{sys.l} input sequence")
    return K, arr


def simulate(sys: LtiSystem, observer: Observer, steps: int, seed: int = 0,
             attack: Optional[AttackSignal] = None, controller=None,
             x0=None) -> Trajectory:
    """Simulate plant and observer for ``steps`` steps.

    ``controller`` is either a state-feedback gain ``K`` (``u = -K x_hat``)
    or a ``steps x l`` sequence of open-loop inputs; ``None`` means zero
    input.  The same ``seed`` always replays the same noise.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    F = error_matrix(sys, observer.gain)
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise UnstableObserver(f"spectral radius of A - LC is {rho:.6g} >= 1")
    n, m, l = sys.n, sys.m, sys.l
    L = observer.gain
    K, u_ext = _controller_inputs(controller, sys, steps)

    rng = np.random.Generator(np.random.PCG64(seed))
    v = rng.standard_normal((steps, n)) @ noise_factor(sys.R1).T
    eta = rng.standard_normal((steps, m)) @ noise_factor(sys.R2).T
    dy, du = (attack or AttackSignal()).arrays(steps, m, l)

    A, B, C = sys.A, sys.B, sys.C
    # plant and observer share the same arithmetic, so an exact observer
    # (no noise, x_hat0 = x0) keeps a residual of exactly zero
    plant_drive = du @ B.T + v
    x = np.empty((steps + 1, n))
    x_hat = np.empty((steps + 1, n))
    y_bar = np.empty((steps, m))
    r = np.empty((steps, m))
    u = np.empty((steps, l))
    x[0] = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    x_hat[0] = observer.x_hat0
    sensed = eta + dy
    for k in range(steps):
        xk, hk = x[k], x_hat[k]
        uk = u_ext[k] - K @ hk
        yk = C @ xk + sensed[k]
        rk = yk - C @ hk
        Bu = B @ uk
        x[k + 1] = A @ xk + Bu + plant_drive[k]
        x_hat[k + 1] = A @ hk + Bu + L @ rk
        u[k], y_bar[k], r[k] = uk, yk, rk

    meta = {"seed": seed, "generator": GENERATOR, "spectral_radius": rho}
    return Trajectory(x, x_hat, y_bar, u, u + du, r, v, eta, dy, du, meta)


def _simulate_residuals(args):
    sys, observer, steps, seed = args
    return simulate(sys, observer, steps, seed).r


def monte_carlo_residuals(sys: LtiSystem, observer: Observer, steps: int, runs: int,
                          seed: int = 0, workers: int = 1) -> list:
    """Attack-free residual series for ``runs`` independent seeds."""
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(runs)]
    jobs = [(sys, observer, steps, s) for s in seeds]
    if workers <= 1:
        return [_simulate_residuals(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_residuals, jobs))


# -- residual statistics -------------------------------------------------------

def lyapunov_residual(sys: LtiSystem, gain, P: np.ndarray) -> float:
    F = error_matrix(sys, gain)
    L = _matrix(gain, "L")
    R = F @ P @ F.T - P + sys.R1 + L @ sys.R2 @ L.T
    return float(np.linalg.norm(R, "fro"))


def solve_lyapunov(sys: LtiSystem, gain, tol: float = 1e-12,
                   max_iter: int = 100_000) -> np.ndarray:
    """Steady-state estimation error covariance ``P``.

    Fixed-point iteration ``P <- F P F^T + R1 + L R2 L^T`` from ``P = 0``
    with ``F = A - LC``; stops once successive iterates differ by less
    than ``tol`` (scaled by ``max(1, |P|)``).
    """
    F = error_matrix(sys, gain)
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise NonConvergent(f"spectral radius of A - LC is {rho:.6g} >= 1")
    L = _matrix(gain, "L")
    Q = sys.R1 + L @ sys.R2 @ L.T
    P = np.zeros_like(Q)
    for _ in range(max_iter):
        nxt = F @ P @ F.T + Q
        nxt = 0.5 * (nxt + nxt.T)
        diff = np.linalg.norm(nxt - P, "fro")
        P = nxt
        if diff < tol * max(1.0, np.linalg.norm(P, "fro")):
            return P
    raise NonConvergent(f"Lyapunov iteration did not converge in {max_iter} iterations")


def residual_covariance(sys: LtiSystem, P: np.ndarray) -> np.ndarray:
    P = _matrix(P, "P")
    if P.shape != (sys.n, sys.n):
        raise DimensionMismatch(f"P must be {sys.n}x{sys.n}, got {P.shape}")
    S = sys.C @ P @ sys.C.T + sys.R2
    return 0.5 * (S + S.T)


class HalfNormalStats(NamedTuple):
    mean: float
    variance: float


def half_normal_stats(sigma: float) -> HalfNormalStats:
    """Mean and variance of ``|r|`` for ``r ~ N(0, sigma^2)``."""
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    return HalfNormalStats(math.sqrt(2.0 / math.pi) * sigma, sigma ** 2 * (1.0 - 2.0 / math.pi))


def two_sided_tail(alpha: float, sigma: float) -> float:
    """``pr[|N(0, sigma^2)| >= alpha]``."""
    return math.erfc(alpha / (sigma * math.sqrt(2.0)))


def threshold_for_rate(sigma: float, rate: float, tol: float = 1e-10) -> float:
    """Threshold whose half-normal exceedance probability equals ``rate``.

    Bisection on ``[0, 10 sigma]``; the tail is strictly decreasing in the
    threshold, so the bracket always contains the root for practical rates.
    """
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    if not 0.0 < rate < 1.0:
        raise ValueError(f"false alarm rate must lie in (0, 1), got {rate}")
    lo, hi = 0.0, 10.0 * sigma
    while two_sided_tail(hi, sigma) > rate:
        hi *= 2.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        p = two_sided_tail(mid, sigma)
        if abs(p - rate) < tol:
            return mid
        if p > rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class DetectorConfig:
    """Per-sensor thresholds, residual standard deviations and target rates."""

    thresholds: np.ndarray
    sigmas: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        for name in ("thresholds", "sigmas", "rates"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), float)))
        if not self.thresholds.shape == self.sigmas.shape == self.rates.shape:
            raise DimensionMismatch("thresholds, sigmas and rates need one entry per sensor")
        if np.any(self.thresholds <= 0) or np.any(self.sigmas <= 0):
            raise ValueError("thresholds and sigmas must be positive")
        if np.any(self.rates <= 0) or np.any(self.rates >= 1):
            raise ValueError("rates must lie in (0, 1)")
        for a, s, rate in zip(self.thresholds, self.sigmas, self.rates):
            if abs(two_sided_tail(a, s) - rate) > 1e-9:
                raise ValueError(f"threshold {a} does not give rate {rate} for sigma {s}")

    @classmethod
    def design(cls, sigmas, rates) -> "DetectorConfig":
        sigmas = np.atleast_1d(np.asarray(sigmas, float))
        rates = np.broadcast_to(np.asarray(rates, float), sigmas.shape).copy()
        return cls([threshold_for_rate(s, a) for s, a in zip(sigmas, rates)], sigmas, rates)

    @classmethod
    def for_system(cls, sys: LtiSystem, gain, rates) -> "DetectorConfig":
        """Thresholds from the steady-state residual covariance of ``sys``."""
        S = residual_covariance(sys, solve_lyapunov(sys, gain))
        return cls.design(np.sqrt(np.diag(S)), rates)

    @property
    def m(self) -> int:
        return self.thresholds.shape[0]


def _residual_matrix(residuals) -> np.ndarray:
    r = np.asarray(residuals, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    if r.shape[0] == 0:
        raise ValueError("residual series is empty")
    return r


def _thresholds(config) -> np.ndarray:
    """Thresholds of a DetectorConfig, or a plain per-sensor threshold array."""
    alpha = getattr(config, "thresholds", config)
    return np.atleast_1d(np.asarray(alpha, dtype=float))


def alarm_mask(residuals, config) -> np.ndarray:
    r = _residual_matrix(residuals)
    alpha = _thresholds(config)
    if r.shape[1] != alpha.shape[0]:
        raise DimensionMismatch(f"residuals have {r.shape[1]} sensors, detector {alpha.shape[0]}")
    return np.abs(r) > alpha


def bad_data_detect(residuals, config) -> list:
    """Alarm times per sensor: every step with ``|r[k, i]| > alpha_i``."""
    mask = alarm_mask(residuals, config)
    return [np.flatnonzero(mask[:, i]) for i in range(mask.shape[1])]


def empirical_alarm_rate(residuals, config) -> np.ndarray:
    return alarm_mask(residuals, config).mean(axis=0)


def settling_horizon(sys: LtiSystem, gain) -> int:
    """Steps discarded before judging a bias attack: ``10 / (1 - rho)``."""
    rho = spectral_radius(error_matrix(sys, gain))
    return int(math.ceil(10.0 / (1.0 - rho)))


def steady_state_residual(sys: LtiSystem, gain, sensor_bias=None, actuator_bias=None):
    """Noise-free residual limit under constant biases.

    From the error recursion at its fixed point:
    ``e* = (I - F)^{-1} (B du - L dy)`` and ``r* = C e* + dy``.
    """
    F = error_matrix(sys, gain)
    L = _matrix(gain, "L")
    dy = np.zeros(sys.m) if sensor_bias is None else np.asarray(sensor_bias, float)
    du = np.zeros(sys.l) if actuator_bias is None else np.asarray(actuator_bias, float)
    e = np.linalg.solve(np.eye(sys.n) - F, sys.B @ du - L @ dy)
    return sys.C @ e + dy


# -- export --------------------------------------------------------------------

def trajectory_header(sys: LtiSystem, with_alarms: bool = True) -> list:
    cols = ["step"]
    cols += [f"x{i + 1}" for i in range(sys.n)]
    cols += [f"xhat{i + 1}" for i in range(sys.n)]
    cols += [f"ybar{i + 1}" for i in range(sys.m)]
    cols += [f"ubar{i + 1}" for i in range(sys.l)]
    cols += [f"r{i + 1}" for i in range(sys.m)]
    if with_alarms:
        cols += [f"alarm{i + 1}" for i in range(sys.m)]
    return cols


def write_trajectory_csv(out, sys: LtiSystem, traj: Trajectory, detector=None) -> None:
    """Write one row per step; ``out`` is a path or a text stream."""
    if isinstance(out, (str, bytes)) or hasattr(out, "__fspath__"):
        with open(out, "w", newline="") as fh:
            return write_trajectory_csv(fh, sys, traj, detector)
    mask = alarm_mask(traj.r, detector) if detector is not None else None
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(trajectory_header(sys, mask is not None))
    for k in range(traj.steps):
        row = [k]
        for block in (traj.x[k], traj.x_hat[k], traj.y_bar[k], traj.u_bar[k], traj.r[k]):
            row.extend(repr(float(v)) for v in block)
        if mask is not None:
            row.extend(int(a) for a in mask[k])
        writer.writerow(row)

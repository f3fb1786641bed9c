"""Parametrically driven nonlinear oscillator: integration, peaks, extreme events.

The system is a unit-mass particle sliding on a rotating parabolic wire whose
angular velocity is modulated periodically.  Equation of motion:

    (1 + lam*x^2) x'' + lam*x*x'^2 + w0sq*x
        - OM0sq*[2*eps*cos(wp*t) + eps^2/2*(1 + cos(2*wp*t))]*x + damping*x' = 0

An event is "extreme" when a local maximum of the observable exceeds the
threshold  mean_peak + 4*std_peak  computed over all detected peaks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dep, guard for safety
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f


class IntegrationError(RuntimeError):
    """Trajectory left the overflow guard; carries the blow-up time."""

    def __init__(self, blow_time: float, guard: float):
        self.blow_time = blow_time
        self.guard = guard
        super().__init__(
            f"integration diverged at t={blow_time:.6g} (|x| or |v| exceeded {guard:g})"
        )


@dataclass(frozen=True)
class SystemParams:
    """Fixed parameters of the oscillator; epsilon is the bifurcation knob."""

    lambda_: float = 0.5
    omega0_sq: float = 0.25
    Omega0_sq: float = 6.7
    omega_p: float = 1.0
    alpha_damp: float = 0.2
    epsilon: float = 0.05

    def __post_init__(self):
        if not self.lambda_ > 0:
            raise ValueError(f"lambda_ must be > 0, got {self.lambda_}")
        if not self.omega_p > 0:
            raise ValueError(f"omega_p must be > 0, got {self.omega_p}")
        if self.alpha_damp < 0:
            raise ValueError(f"alpha_damp must be >= 0, got {self.alpha_damp}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")

    def with_epsilon(self, epsilon: float) -> "SystemParams":
        return SystemParams(
            lambda_=self.lambda_,
            omega0_sq=self.omega0_sq,
            Omega0_sq=self.Omega0_sq,
            omega_p=self.omega_p,
            alpha_damp=self.alpha_damp,
            epsilon=epsilon,
        )


@dataclass(frozen=True)
class State:
    """Phase-space point (position, velocity) at time t."""

    x: float
    v: float
    t: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.v) and math.isfinite(self.t)):
            raise ValueError(f"state must be finite, got x={self.x}, v={self.v}, t={self.t}")


def _drive_stiffness(Om0sq, eps, wp, t):
    # time-dependent part of the restoring coefficient
    return Om0sq * (2.0 * eps * math.cos(wp * t)
                    + 0.5 * eps * eps * (1.0 + math.cos(2.0 * wp * t)))


def _acceleration(x, v, drive, lam, w0sq, damping):
    return -(lam * x * v * v + w0sq * x - drive * x + damping * v) / (1.0 + lam * x * x)


def eom_rhs(state: State, params: SystemParams) -> tuple[float, float]:
    """Right-hand side (dx/dt, dv/dt) of the equation of motion."""
    if not (math.isfinite(state.x) and math.isfinite(state.v) and math.isfinite(state.t)):
        raise ValueError("eom_rhs requires a finite state")
    drive = _drive_stiffness(params.Omega0_sq, params.epsilon, params.omega_p, state.t)
    dv = _acceleration(state.x, state.v, drive, params.lambda_,
                       params.omega0_sq, params.alpha_damp)
    return state.v, dv


def _rk4_kernel(lam, w0sq, Om0sq, wp, damping, eps, x0, v0, t0, dt,
                n_steps, n_transient_steps, k_sample, guard,
                samples, fine, store_fine):
    """Fixed-step RK4 march.  Fills preallocated `samples` (t, x, v) and
    `fine` (x, v) arrays; returns (n_fine, n_samples, blow_step).
    blow_step is -1 when the trajectory stayed inside the guard."""
    x = x0
    v = v0
    j = 0
    m = 0
    for n in range(n_steps):
        t = t0 + n * dt
        d0 = Om0sq * (2.0 * eps * math.cos(wp * t)
                      + 0.5 * eps * eps * (1.0 + math.cos(2.0 * wp * t)))
        th = t + 0.5 * dt
        dh = Om0sq * (2.0 * eps * math.cos(wp * th)
                      + 0.5 * eps * eps * (1.0 + math.cos(2.0 * wp * th)))
        tf = t + dt
        df = Om0sq * (2.0 * eps * math.cos(wp * tf)
                      + 0.5 * eps * eps * (1.0 + math.cos(2.0 * wp * tf)))

        k1x = v
        k1v = -(lam * x * v * v + w0sq * x - d0 * x + damping * v) / (1.0 + lam * x * x)
        x2 = x + 0.5 * dt * k1x
        v2 = v + 0.5 * dt * k1v
        k2x = v2
        k2v = -(lam * x2 * v2 * v2 + w0sq * x2 - dh * x2 + damping * v2) / (1.0 + lam * x2 * x2)
        x3 = x + 0.5 * dt * k2x
        v3 = v + 0.5 * dt * k2v
        k3x = v3
        k3v = -(lam * x3 * v3 * v3 + w0sq * x3 - dh * x3 + damping * v3) / (1.0 + lam * x3 * x3)
        x4 = x + dt * k3x
        v4 = v + dt * k3v
        k4x = v4
        k4v = -(lam * x4 * v4 * v4 + w0sq * x4 - df * x4 + damping * v4) / (1.0 + lam * x4 * x4)

        x = x + dt * (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
        v = v + dt * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0

        if not (abs(x) < guard and abs(v) < guard):
            return j, m, n + 1

        step = n + 1
        if step > n_transient_steps:
            if store_fine:
                fine[j, 0] = x
                fine[j, 1] = v
                j += 1
            if step % k_sample == 0:
                samples[m, 0] = t0 + step * dt
                samples[m, 1] = x
                samples[m, 2] = v
                m += 1
    return j, m, -1


_rk4_fast = njit(cache=True)(_rk4_kernel)


@dataclass
class Trajectory:
    """Uniformly sampled trajectory plus the integrator-resolution series.

    `t`, `x`, `v` hold the stored samples (spacing `sample_interval`).
    `fine_x`/`fine_v` hold every post-transient integrator step so peak
    statistics are not aliased by the coarse sampling.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    dt_integrate: float
    sample_interval: float
    transient_discarded: float
    fine_t0: float = 0.0
    fine_x: np.ndarray | None = field(default=None, repr=False)
    fine_v: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        k = self.sample_interval / self.dt_integrate
        if abs(k - round(k)) > 1e-9:
            raise ValueError("sample_interval must be an integer multiple of dt_integrate")
        if len(self.t) > 1:
            gaps = np.diff(self.t)
            if not np.all(gaps > 0):
                raise ValueError("sample times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t)

    def series(self, variable: str = "x") -> np.ndarray:
        if variable not in ("x", "v"):
            raise ValueError(f"variable must be 'x' or 'v', got {variable!r}")
        return self.x if variable == "x" else self.v

    def fine_series(self, variable: str = "x") -> tuple[np.ndarray, np.ndarray]:
        """(times, values) at integrator resolution; falls back to the stored
        samples when the fine series was not kept."""
        vals = self.fine_x if variable == "x" else self.fine_v
        if vals is None:
            return self.t, self.series(variable)
        times = self.fine_t0 + self.dt_integrate * np.arange(len(vals))
        return times, vals


def integrate(params: SystemParams, ic: State, t_end: float, dt: float = 0.01,
              sample_interval: float = 1.0, transient: float = 0.0,
              keep_fine: bool = True, overflow_guard: float = 1e6) -> Trajectory:
    """Integrate the equation of motion with fixed-step RK4.

    Samples are stored only for elapsed time > transient.  Deterministic:
    identical inputs produce bit-identical trajectories.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    k = sample_interval / dt
    k_sample = int(round(k))
    if k_sample < 1 or abs(k - k_sample) > 1e-9:
        raise ValueError(
            f"sample_interval ({sample_interval}) must be a positive integer multiple of dt ({dt})"
        )
    if t_end <= transient:
        raise ValueError(f"t_end ({t_end}) must exceed transient ({transient})")

    n_steps = int(round(t_end / dt))
    n_transient_steps = int(round(transient / dt))
    n_fine = max(n_steps - n_transient_steps, 0)
    n_samp = n_fine // k_sample + 1

    samples = np.empty((n_samp, 3))
    fine = np.empty((n_fine if keep_fine else 0, 2))
    j, m, blow_step = _rk4_fast(
        params.lambda_, params.omega0_sq, params.Omega0_sq, params.omega_p,
        params.alpha_damp, params.epsilon,
        ic.x, ic.v, ic.t, dt,
        n_steps, n_transient_steps, k_sample, overflow_guard,
        samples, fine, keep_fine,
    )
    if blow_step >= 0:
        raise IntegrationError(ic.t + blow_step * dt, overflow_guard)

    return Trajectory(
        t=samples[:m, 0].copy(),
        x=samples[:m, 1].copy(),
        v=samples[:m, 2].copy(),
        dt_integrate=dt,
        sample_interval=sample_interval,
        transient_discarded=transient,
        fine_t0=ic.t + (n_transient_steps + 1) * dt,
        fine_x=fine[:j, 0].copy() if keep_fine else None,
        fine_v=fine[:j, 1].copy() if keep_fine else None,
    )


def local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices of strict local maxima; a flat-topped maximum reports the first
    index of its plateau."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ValueError("values must be one-dimensional")
    n = values.size
    if n < 3:
        return np.empty(0, dtype=int)
    d = np.sign(np.diff(values)).astype(np.int64)
    # backward-fill zeros with the next nonzero slope so plateaus resolve to
    # the eventual direction of exit
    m = d.size
    idx = np.arange(m)
    nxt = np.where(d != 0, idx, m)
    nxt = np.minimum.accumulate(nxt[::-1])[::-1]
    d_exit = np.where(nxt < m, d[np.minimum(nxt, m - 1)], 0)
    mask = (d[:-1] == 1) & (d_exit[1:] == -1)
    return np.nonzero(mask)[0] + 1


def detect_peaks(traj: Trajectory, variable: str = "v",
                 resolution: str = "fine") -> np.ndarray:
    """All local maxima of the chosen observable as an (n, 2) array of (t, value).

    `resolution='fine'` scans the integrator-resolution series (default);
    'samples' scans the stored coarse samples.
    """
    if resolution == "fine":
        times, vals = traj.fine_series(variable)
    elif resolution == "samples":
        times, vals = traj.t, traj.series(variable)
    else:
        raise ValueError(f"resolution must be 'fine' or 'samples', got {resolution!r}")
    if len(vals) < 3:
        raise ValueError(f"need at least 3 samples to detect peaks, got {len(vals)}")
    idx = local_maxima(vals)
    return np.column_stack([times[idx], vals[idx]])


@dataclass(frozen=True)
class PeakStatistics:
    """Peak ensemble with its extreme-event threshold mean + 4*std."""

    peaks: np.ndarray  # (n, 2) rows of (t, value)
    mean_peak: float
    std_peak: float
    threshold: float

    @property
    def n_peaks(self) -> int:
        return len(self.peaks)


def peak_statistics(peaks: np.ndarray) -> PeakStatistics:
    """Mean, population standard deviation, and threshold of peak amplitudes."""
    peaks = np.asarray(peaks, dtype=float)
    if peaks.size == 0:
        raise ValueError("peak_statistics requires at least one peak")
    if peaks.ndim != 2 or peaks.shape[1] != 2:
        raise ValueError(f"peaks must be an (n, 2) array of (t, value), got shape {peaks.shape}")
    amps = peaks[:, 1]
    mean = float(np.mean(amps))
    std = float(np.std(amps))  # population convention: defined for a single peak
    return PeakStatistics(peaks=peaks, mean_peak=mean, std_peak=std,
                          threshold=mean + 4.0 * std)


def classify_extremes(peaks: np.ndarray, threshold: float) -> tuple[int, np.ndarray]:
    """Peaks strictly above the threshold: (count, (n, 2) array of events)."""
    if not math.isfinite(threshold):
        raise ValueError(f"threshold must be finite, got {threshold}")
    peaks = np.asarray(peaks, dtype=float).reshape(-1, 2)
    events = peaks[peaks[:, 1] > threshold]
    return len(events), events


def save_trajectory_csv(traj: Trajectory, path) -> None:
    """Write the stored samples as CSV rows `t,x,v` at full double precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "v"])
        for t, x, v in zip(traj.t, traj.x, traj.v):
            writer.writerow([f"{t:.17g}", f"{x:.17g}", f"{v:.17g}"])


def load_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read back a trajectory CSV as (t, x, v) arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    data = data.reshape(-1, 3)
    return data[:, 0], data[:, 1], data[:, 2]

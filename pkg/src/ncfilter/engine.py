"""Stochastic time stepping: single trajectories and ensembles.

Trajectories are driven by per-trajectory noise streams derived from a
master seed with a splitmix-style mix, so every record is a pure
function of (configuration, master seed, trajectory index) and results
do not depend on how work is batched or parallelized.  The stepping is
vectorized across trajectories: states live in stacked row vectors, the
compiled generators are assembled per substage and applied with one
matrix product per stage.

Stepping convention (both measurement schemes, both the reduced and the
joint-space processes): the measurement update uses the left-endpoint
state (Ito), the deterministic part of the step is one RK4 stage of the
appropriate linear generator, and the family is renormalized by the
physical trace afterwards.  For counting this is exactly the normalized
no-detection flow; for quadrature measurements it is a split-step
Euler-Maruyama whose innovation coefficient vanishes in trace.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .envelopes import FieldState, envelope_intensity
from .errors import IntegrationError, VanishingIntensityError
from .filters import JUMP_INTENSITY_FLOOR, FilterState
from .generators import (
    CompiledProcess,
    TimeDependentMatrix,
    compile_reduced_process,
    initial_reduced_vec,
)
from .operators import SystemModel

#: trajectories per work unit; fixed so statistics do not depend on threads
CHUNK_SIZE = 256

_MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, index: int) -> int:
    """Per-trajectory seed: splitmix64 finalizer of master + (i+1)*golden.

    The golden-gamma increment walks the seed space and the finalizer
    decorrelates neighbouring indices; any 64-bit master seed gives an
    independent-looking family of streams.
    """
    z = (int(master_seed) + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i * dt, i = 0 .. n_steps."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1:
            raise ValueError("grid needs at least one step")

    @classmethod
    def from_horizon(cls, dt: float, horizon: float) -> "TimeGrid":
        if dt <= 0 or horizon <= 0:
            raise ValueError("dt and horizon must be positive")
        return cls(dt, max(1, int(round(horizon / dt))))

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def refined(self) -> np.ndarray:
        """Node and midpoint times, used for RK4 substage coefficients."""
        return (0.5 * self.dt) * np.arange(2 * self.n_steps + 1)


@dataclass
class MeasurementRecord:
    scheme: str  # "counting" | "homodyne"
    times: np.ndarray
    jump_times: np.ndarray | None = None
    dY: np.ndarray | None = None


@dataclass
class TrajectoryResult:
    record: MeasurementRecord
    observables: dict
    final_state: object
    seed: int
    states: np.ndarray | None = None  # (n_nodes, D) stacked vec, if requested


@dataclass
class EnsembleResult:
    scheme: str
    times: np.ndarray
    n_traj: int
    master_seed: int
    mean_excitation: np.ndarray
    stderr_excitation: np.ndarray
    mean_rate: np.ndarray
    stderr_rate: np.ndarray
    rho_mean: np.ndarray        # (n_nodes, d, d) mean physical state
    rho_stderr: np.ndarray      # (n_nodes, d, d) per-entry standard error
    counts: np.ndarray | None = None          # counting: jumps per trajectory
    intensity_integral: np.ndarray | None = None  # counting: int k dt per traj
    first_jump_times: np.ndarray | None = None    # counting: nan when no jump
    sum_dW: np.ndarray | None = None           # homodyne: per-trajectory sums
    sum_dW_sq: np.ndarray | None = None
    sum_dY: np.ndarray | None = None
    negative_intensity_clamps: int = 0
    large_step_warnings: int = 0

    @property
    def zero_count_fraction(self) -> float:
        if self.counts is None:
            raise ValueError("zero-count fraction is defined for counting runs")
        return float(np.mean(self.counts == 0))


def empirical_count_distribution(result: EnsembleResult):
    """Normalized histogram of total detections per trajectory."""
    if result.scheme != "counting" or result.counts is None:
        raise ValueError("count distribution needs a counting ensemble")
    values, freq = np.unique(result.counts, return_counts=True)
    return values, freq / result.counts.size


def _clamp_nodes(proc: CompiledProcess, grid: TimeGrid) -> np.ndarray | None:
    """Node mask where the exhausted-pulse hard-zero of auxiliaries applies."""
    if proc.aux_clamp is None:
        return None
    return np.asarray(proc.aux_clamp(grid.times), dtype=bool)


class _RK4Stepper:
    """Per-run cache of substage coefficient values for one generator."""

    def __init__(self, tdm: TimeDependentMatrix, grid: TimeGrid):
        self.tdm = tdm
        self.vals = tdm.coefficient_values(grid.refined)
        self.h = grid.dt
        self._next_start: tuple | None = None

    def step(self, y: np.ndarray, i: int) -> np.ndarray:
        v = self.vals
        if self._next_start is not None and self._next_start[0] == i:
            a0 = self._next_start[1]
        else:
            a0 = self.tdm.assemble_T(v[:, 2 * i])
        am = self.tdm.assemble_T(v[:, 2 * i + 1])
        a1 = self.tdm.assemble_T(v[:, 2 * i + 2])
        self._next_start = (i + 1, a1)
        h = self.h
        k1 = y @ a0
        k2 = (y + (0.5 * h) * k1) @ am
        k3 = (y + (0.5 * h) * k2) @ am
        k4 = (y + h * k3) @ a1
        return y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


class _Collector:
    """Per-node statistics, either full arrays (small batches) or sums."""

    def __init__(self, proc: CompiledProcess, n_nodes: int, full: bool, store_states: bool):
        self.proc = proc
        self.full = full
        self.store_states = store_states
        d = proc.sys_dim
        self.d = d
        d2 = d * d
        self.rho_cols = [
            slice(b * d2, (b + 1) * d2) for b in proc.rho_block
        ]
        self.n_nodes = n_nodes
        if full:
            self.exc = None  # allocated on first node (batch size known then)
            self.rate = None
            self.states = None
        else:
            self.exc_sum = np.zeros(n_nodes)
            self.exc_sq = np.zeros(n_nodes)
            self.rate_sum = np.zeros(n_nodes)
            self.rate_sq = np.zeros(n_nodes)
            self.rho_sum = np.zeros((n_nodes, d2), dtype=complex)
            self.rho_re_sq = np.zeros((n_nodes, d2))
            self.rho_im_sq = np.zeros((n_nodes, d2))

    def _rho_vec(self, y: np.ndarray) -> np.ndarray:
        out = y[:, self.rho_cols[0]].copy()
        for sl in self.rho_cols[1:]:
            out += y[:, sl]
        return out

    def node(self, i: int, y: np.ndarray, exc: np.ndarray, rate: np.ndarray):
        if self.full:
            if self.exc is None:
                m = y.shape[0]
                self.exc = np.empty((self.n_nodes, m))
                self.rate = np.empty((self.n_nodes, m))
                if self.store_states:
                    self.states = np.empty((self.n_nodes, m, y.shape[1]), dtype=complex)
            self.exc[i] = exc
            self.rate[i] = rate
            if self.store_states:
                self.states[i] = y
        else:
            rho = self._rho_vec(y)
            self.exc_sum[i] += exc.sum()
            self.exc_sq[i] += (exc**2).sum()
            self.rate_sum[i] += rate.sum()
            self.rate_sq[i] += (rate**2).sum()
            self.rho_sum[i] += rho.sum(axis=0)
            self.rho_re_sq[i] += (rho.real**2).sum(axis=0)
            self.rho_im_sq[i] += (rho.imag**2).sum(axis=0)

    def merge(self, other: "_Collector"):
        self.exc_sum += other.exc_sum
        self.exc_sq += other.exc_sq
        self.rate_sum += other.rate_sum
        self.rate_sq += other.rate_sq
        self.rho_sum += other.rho_sum
        self.rho_re_sq += other.rho_re_sq
        self.rho_im_sq += other.rho_im_sq


def _mean_stderr(total, total_sq, m):
    mean = total / m
    if m > 1:
        var = np.maximum(total_sq / m - mean**2, 0.0) * (m / (m - 1))
        return mean, np.sqrt(var / m)
    return mean, np.zeros_like(mean)


@dataclass
class _RunStats:
    counts: np.ndarray | None = None
    intensity_integral: np.ndarray | None = None
    jump_steps: list = field(default_factory=list)
    sum_dW: np.ndarray | None = None
    sum_dW_sq: np.ndarray | None = None
    sum_dY: np.ndarray | None = None
    dY_full: np.ndarray | None = None
    negative_clamps: int = 0
    large_steps: int = 0


def run_counting(
    proc: CompiledProcess,
    grid: TimeGrid,
    y0: np.ndarray,
    *,
    uniforms: np.ndarray | None = None,
    decisions: np.ndarray | None = None,
    collector: _Collector | None = None,
):
    """Advance a batch of counting trajectories over the whole grid.

    Exactly one of ``uniforms`` (per-step uniform draws, shape (M, n))
    and ``decisions`` (a recorded jump pattern to replay) must be given.
    Returns (final states, collector, stats).
    """
    if (uniforms is None) == (decisions is None):
        raise ValueError("provide exactly one of uniforms and decisions")
    y = np.array(y0, dtype=complex)
    if y.ndim == 1:
        y = y[None, :]
    m, dim = y.shape
    n = grid.n_steps
    dt = grid.dt
    noise = uniforms if uniforms is not None else decisions
    if noise.shape != (m, n):
        raise ValueError(f"noise must have shape {(m, n)}, got {noise.shape}")

    stepper = _RK4Stepper(proc.nojump, grid)
    k_vals = proc.intensity.coefficient_values(grid.times)
    j_vals = proc.jump.coefficient_values(grid.times)
    clamped = _clamp_nodes(proc, grid)
    if collector is None:
        collector = _Collector(proc, n + 1, full=True, store_states=False)
    stats = _RunStats(
        counts=np.zeros(m, dtype=int),
        intensity_integral=np.zeros(m),
        jump_steps=[[] for _ in range(m)],
    )
    exc_dual = proc.excited
    trace_dual_vec = proc.trace

    for i in range(n):
        if clamped is not None and clamped[i]:
            y[:, proc.aux_start :] = 0.0
        k = (y @ proc.intensity.assemble(k_vals[:, i])).real
        neg = k < 0
        if neg.any():
            stats.negative_clamps += int(neg.sum())
            k = np.where(neg, 0.0, k)
        collector.node(i, y, (y @ exc_dual).real, k)
        stats.intensity_integral += k * dt
        p = k * dt
        if np.any(p > 0.1):
            stats.large_steps += int((p > 0.1).sum())
        if uniforms is not None:
            mask = uniforms[:, i] < p
        else:
            mask = decisions[:, i].astype(bool)
        y_next = stepper.step(y, i)
        if mask.any():
            idx = np.nonzero(mask)[0]
            if np.any(k[idx] < JUMP_INTENSITY_FLOOR):
                raise VanishingIntensityError(
                    f"jump scheduled at vanishing intensity (t = {i * dt:.6g})"
                )
            jm = proc.jump.assemble_T(j_vals[:, i])
            y_next[idx] = y[idx] @ jm
            stats.counts[idx] += 1
            for j in idx:
                stats.jump_steps[j].append(i)
        tr = (y_next @ trace_dual_vec).real
        if not np.all(np.isfinite(tr)) or np.any(tr <= 0):
            raise IntegrationError(
                f"state trace collapsed at t = {(i + 1) * dt:.6g}"
            )
        y = y_next / tr[:, None]

    if clamped is not None and clamped[n]:
        y[:, proc.aux_start :] = 0.0
    k_final = np.maximum((y @ proc.intensity.assemble(k_vals[:, n])).real, 0.0)
    collector.node(n, y, (y @ exc_dual).real, k_final)
    return y, collector, stats


def run_homodyne(
    proc: CompiledProcess,
    grid: TimeGrid,
    y0: np.ndarray,
    dW: np.ndarray,
    *,
    collector: _Collector | None = None,
    keep_dY: bool = False,
):
    """Advance a batch of quadrature-measurement trajectories."""
    y = np.array(y0, dtype=complex)
    if y.ndim == 1:
        y = y[None, :]
    m, dim = y.shape
    n = grid.n_steps
    dt = grid.dt
    if dW.shape != (m, n):
        raise ValueError(f"dW must have shape {(m, n)}, got {dW.shape}")

    stepper = _RK4Stepper(proc.drift, grid)
    b_vals = proc.diffusion.coefficient_values(grid.times)
    v_vals = proc.quadrature.coefficient_values(grid.times)
    clamped = _clamp_nodes(proc, grid)
    if collector is None:
        collector = _Collector(proc, n + 1, full=True, store_states=False)
    stats = _RunStats(
        sum_dW=np.zeros(m),
        sum_dW_sq=np.zeros(m),
        sum_dY=np.zeros(m),
        dY_full=np.empty((m, n)) if keep_dY else None,
    )
    exc_dual = proc.excited
    trace_dual_vec = proc.trace

    for i in range(n):
        if clamped is not None and clamped[i]:
            y[:, proc.aux_start :] = 0.0
        v = (y @ proc.quadrature.assemble(v_vals[:, i])).real
        collector.node(i, y, (y @ exc_dual).real, v)
        w = dW[:, i]
        dY = v * dt + w
        stats.sum_dW += w
        stats.sum_dW_sq += w**2
        stats.sum_dY += dY
        if keep_dY:
            stats.dY_full[:, i] = dY
        bt = proc.diffusion.assemble_T(b_vals[:, i])
        y = y + w[:, None] * (y @ bt - v[:, None] * y)
        y = stepper.step(y, i)
        tr = (y @ trace_dual_vec).real
        if not np.all(np.isfinite(tr)) or np.any(tr <= 0):
            raise IntegrationError(
                f"non-finite or collapsed state at t = {(i + 1) * dt:.6g}"
            )
        y = y / tr[:, None]

    if clamped is not None and clamped[n]:
        y[:, proc.aux_start :] = 0.0
    v_final = (y @ proc.quadrature.assemble(v_vals[:, n])).real
    collector.node(n, y, (y @ exc_dual).real, v_final)
    return y, collector, stats


def _final_filter_state(proc: CompiledProcess, y_row: np.ndarray):
    if proc.level == "extended":
        dx = 2 * proc.sys_dim
        return y_row.reshape(dx, dx)
    d = proc.sys_dim
    mats = y_row.reshape(len(proc.labels), d, d)
    return FilterState(proc.labels, mats)


def simulate_counting(
    model: SystemModel,
    fs: FieldState,
    rho0: np.ndarray,
    grid: TimeGrid,
    seed: int,
    *,
    store_states: bool = False,
) -> TrajectoryResult:
    """One photon-counting trajectory with reproducible randomness."""
    proc = compile_reduced_process(model, fs)
    y0 = initial_reduced_vec(rho0, fs)
    uniforms = _rng(seed).random(grid.n_steps)[None, :]
    collector = _Collector(proc, grid.n_steps + 1, full=True, store_states=store_states)
    y, collector, stats = run_counting(
        proc, grid, y0[None, :], uniforms=uniforms, collector=collector
    )
    times = grid.times
    jump_times = times[np.array(stats.jump_steps[0], dtype=int)] if stats.jump_steps[0] else np.empty(0)
    record = MeasurementRecord("counting", times, jump_times=np.asarray(jump_times))
    return TrajectoryResult(
        record=record,
        observables={
            "excitation": collector.exc[:, 0].copy(),
            "intensity": collector.rate[:, 0].copy(),
        },
        final_state=_final_filter_state(proc, y[0]),
        seed=seed,
        states=collector.states[:, 0] if store_states else None,
    )


def simulate_homodyne(
    model: SystemModel,
    fs: FieldState,
    rho0: np.ndarray,
    grid: TimeGrid,
    seed: int,
    *,
    store_states: bool = False,
) -> TrajectoryResult:
    """One quadrature-measurement trajectory with reproducible randomness."""
    proc = compile_reduced_process(model, fs)
    y0 = initial_reduced_vec(rho0, fs)
    dW = np.sqrt(grid.dt) * _rng(seed).standard_normal(grid.n_steps)[None, :]
    collector = _Collector(proc, grid.n_steps + 1, full=True, store_states=store_states)
    y, collector, stats = run_homodyne(
        proc, grid, y0[None, :], dW, collector=collector, keep_dY=True
    )
    record = MeasurementRecord("homodyne", grid.times, dY=stats.dY_full[0].copy())
    return TrajectoryResult(
        record=record,
        observables={
            "excitation": collector.exc[:, 0].copy(),
            "quadrature_rate": collector.rate[:, 0].copy(),
        },
        final_state=_final_filter_state(proc, y[0]),
        seed=seed,
        states=collector.states[:, 0] if store_states else None,
    )


def _worker_count(n_chunks: int) -> int:
    raw = os.environ.get("NCFILTER_THREADS", "").strip()
    if raw in ("", "0"):
        n = os.cpu_count() or 1
    else:
        n = int(raw)
        if n < 0:
            raise ValueError("NCFILTER_THREADS must be >= 0")
        n = n or (os.cpu_count() or 1)
    return max(1, min(n, n_chunks))


def run_ensemble(
    model: SystemModel,
    fs: FieldState,
    rho0: np.ndarray,
    grid: TimeGrid,
    n_traj: int,
    master_seed: int,
    scheme: str = "counting",
) -> EnsembleResult:
    """Monte Carlo ensemble with per-node statistics.

    Per-trajectory seeds are ``derive_seed(master_seed, i)``; work is cut
    into fixed-size chunks and chunk results are merged in index order,
    so means and standard errors are bit-identical for any worker count.
    """
    if n_traj < 1:
        raise ValueError("ensemble needs at least one trajectory")
    if scheme not in ("counting", "homodyne"):
        raise ValueError(f"unknown measurement scheme {scheme!r}")
    proc = compile_reduced_process(model, fs)
    y0 = initial_reduced_vec(rho0, fs)
    n = grid.n_steps
    n_nodes = n + 1

    chunks = [
        (start, min(start + CHUNK_SIZE, n_traj))
        for start in range(0, n_traj, CHUNK_SIZE)
    ]

    def work(chunk):
        start, stop = chunk
        m = stop - start
        coll = _Collector(proc, n_nodes, full=False, store_states=False)
        y_init = np.broadcast_to(y0, (m, y0.size)).copy()
        if scheme == "counting":
            noise = np.stack(
                [_rng(derive_seed(master_seed, i)).random(n) for i in range(start, stop)]
            )
            _, coll, stats = run_counting(
                proc, grid, y_init, uniforms=noise, collector=coll
            )
        else:
            noise = np.sqrt(grid.dt) * np.stack(
                [
                    _rng(derive_seed(master_seed, i)).standard_normal(n)
                    for i in range(start, stop)
                ]
            )
            _, coll, stats = run_homodyne(proc, grid, y_init, noise, collector=coll)
        return coll, stats

    workers = _worker_count(len(chunks))
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]

    total = _Collector(proc, n_nodes, full=False, store_states=False)
    counting = scheme == "counting"
    counts = np.empty(n_traj, dtype=int) if counting else None
    int_k = np.empty(n_traj) if counting else None
    first_jumps = np.full(n_traj, np.nan) if counting else None
    sum_dW = np.empty(n_traj) if not counting else None
    sum_dW_sq = np.empty(n_traj) if not counting else None
    sum_dY = np.empty(n_traj) if not counting else None
    neg = 0
    large = 0
    for (start, stop), (coll, stats) in zip(chunks, results):
        total.merge(coll)
        neg += stats.negative_clamps
        large += stats.large_steps
        if counting:
            counts[start:stop] = stats.counts
            int_k[start:stop] = stats.intensity_integral
            for j, steps in enumerate(stats.jump_steps):
                if steps:
                    first_jumps[start + j] = steps[0] * grid.dt
        else:
            sum_dW[start:stop] = stats.sum_dW
            sum_dW_sq[start:stop] = stats.sum_dW_sq
            sum_dY[start:stop] = stats.sum_dY

    mean_exc, se_exc = _mean_stderr(total.exc_sum, total.exc_sq, n_traj)
    mean_rate, se_rate = _mean_stderr(total.rate_sum, total.rate_sq, n_traj)
    d = proc.sys_dim
    rho_mean = (total.rho_sum / n_traj).reshape(n_nodes, d, d)
    if n_traj > 1:
        re_mean = total.rho_sum.real / n_traj
        im_mean = total.rho_sum.imag / n_traj
        fac = n_traj / (n_traj - 1)
        re_var = np.maximum(total.rho_re_sq / n_traj - re_mean**2, 0.0) * fac
        im_var = np.maximum(total.rho_im_sq / n_traj - im_mean**2, 0.0) * fac
        rho_se = np.sqrt((re_var + im_var) / n_traj).reshape(n_nodes, d, d)
    else:
        rho_se = np.zeros((n_nodes, d, d))

    return EnsembleResult(
        scheme=scheme,
        times=grid.times,
        n_traj=n_traj,
        master_seed=master_seed,
        mean_excitation=mean_exc,
        stderr_excitation=se_exc,
        mean_rate=mean_rate,
        stderr_rate=se_rate,
        rho_mean=rho_mean,
        rho_stderr=rho_se,
        counts=counts,
        intensity_integral=int_k,
        first_jump_times=first_jumps,
        sum_dW=sum_dW,
        sum_dW_sq=sum_dW_sq,
        sum_dY=sum_dY,
        negative_intensity_clamps=neg,
        large_step_warnings=large,
    )


# ---------------------------------------------------------------------------
# Deterministic propagation through the compiled generators.
# ---------------------------------------------------------------------------


def integrate_compiled(
    tdm: TimeDependentMatrix,
    grid: TimeGrid,
    y0: np.ndarray,
    *,
    renorm_dual: np.ndarray | None = None,
) -> np.ndarray:
    """RK4 on a compiled linear generator; states at all nodes.

    ``y0`` may be a single stacked vector or a batch (M, D).  When
    ``renorm_dual`` is given the state is rescaled to unit dual value
    after every step (used for normalized filter flows).
    """
    y = np.array(y0, dtype=complex)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[None, :]
    stepper = _RK4Stepper(tdm, grid)
    out = np.empty((grid.n_steps + 1,) + y.shape, dtype=complex)
    out[0] = y
    for i in range(grid.n_steps):
        y = stepper.step(y, i)
        if renorm_dual is not None:
            tr = (y @ renorm_dual).real
            y = y / tr[:, None]
        if i % 200 == 199 and not np.all(np.isfinite(y.view(float))):
            raise IntegrationError(f"non-finite state at t = {(i + 1) * grid.dt:.6g}")
        out[i + 1] = y
    if not np.all(np.isfinite(out.view(float))):
        raise IntegrationError("non-finite state in compiled integration")
    return out[:, 0, :] if squeeze else out


def master_states(
    model: SystemModel, fs: FieldState, rho0: np.ndarray, grid: TimeGrid
) -> np.ndarray:
    """Unconditional solution as stacked vectors at every node."""
    proc = compile_reduced_process(model, fs)
    return integrate_compiled(proc.drift, grid, initial_reduced_vec(rho0, fs))


def master_excitation(
    model: SystemModel, fs: FieldState, rho0: np.ndarray, grid: TimeGrid
) -> np.ndarray:
    """Excited-level population of the unconditional state at every node."""
    proc = compile_reduced_process(model, fs)
    states = integrate_compiled(proc.drift, grid, initial_reduced_vec(rho0, fs))
    return (states @ proc.excited).real


def survival_curve(
    model: SystemModel, fs: FieldState, rho0: np.ndarray, grid: TimeGrid
) -> np.ndarray:
    """Probability of zero detections up to every node (non-increasing)."""
    proc = compile_reduced_process(model, fs)
    states = integrate_compiled(proc.nojump, grid, initial_reduced_vec(rho0, fs))
    return (states @ proc.trace).real


def quadrature_curve(
    model: SystemModel, fs: FieldState, rho0: np.ndarray, grid: TimeGrid
) -> np.ndarray:
    """Unconditional mean quadrature rate at every node."""
    proc = compile_reduced_process(model, fs)
    states = integrate_compiled(proc.drift, grid, initial_reduced_vec(rho0, fs))
    vals = proc.quadrature.coefficient_values(grid.times)
    duals_per_node = vals.T @ proc.quadrature.duals  # (n_nodes, D)
    return np.real(np.sum(states * duals_per_node, axis=1))


def flux_curve(fs: FieldState, grid: TimeGrid) -> np.ndarray:
    """Reported input-field intensity at every node."""
    return np.asarray(envelope_intensity(fs, grid.times), dtype=float)

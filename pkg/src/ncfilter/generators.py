"""Compiled, vectorized form of the dynamics.

Every right-hand side in this package is linear in the state once the
posterior normalization is peeled off, with time entering only through a
handful of scalar pulse coefficients.  Each family of equations is
therefore compiled once per scenario into a sum

    A(t) = sum_k c_k(t) * A_k

of constant block matrices acting on the stacked, row-major vectorized
state.  Assembling A(t) is a cheap tensor contraction, and applying it
to a whole ensemble of trajectories is a single matrix product.  The
trajectory engine and the deterministic integrators share this layer;
the readable matrix-form operations in :mod:`ncfilter.hierarchy` and
:mod:`ncfilter.filters` stay the reference implementations and the test
suite pins the two paths against each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .envelopes import (
    TAIL_EPS,
    CoherentMixtureField,
    FieldState,
    PhotonComboField,
)
from .hierarchy import CASCADE_LABELS, coherent_labels
from .operators import (
    SystemModel,
    sop_left,
    sop_lindblad,
    sop_right,
    sop_sandwich,
    trace_dual,
)


class TimeDependentMatrix:
    """sum_k c_k(t) M_k with scalar coefficient channels c_k."""

    def __init__(self, coeffs: Sequence[Callable], mats: np.ndarray):
        mats = np.asarray(mats, dtype=complex)
        if mats.ndim != 3 or len(coeffs) != mats.shape[0]:
            raise ValueError("need one coefficient channel per stacked matrix")
        self.coeffs = tuple(coeffs)
        self.mats = mats
        # transposed stack: ensembles are row-stacked, so states multiply A^T
        self.mats_T = np.ascontiguousarray(mats.transpose(0, 2, 1))

    @property
    def dim(self) -> int:
        return self.mats.shape[-1]

    def coefficient_values(self, times) -> np.ndarray:
        """Channel values on a grid, shape (n_channels, n_times)."""
        times = np.asarray(times, dtype=float)
        return np.stack([np.asarray(c(times), dtype=complex) for c in self.coeffs])

    def at(self, t: float) -> np.ndarray:
        c = np.array([c_fn(t) for c_fn in self.coeffs], dtype=complex)
        return np.tensordot(c, self.mats, axes=1)

    def assemble_T(self, values_column: np.ndarray) -> np.ndarray:
        """Transposed matrix from precomputed channel values at one time."""
        return np.tensordot(values_column, self.mats_T, axes=1)


class TimeDependentDual:
    """sum_k c_k(t) w_k acting on stacked state vectors as y . w."""

    def __init__(self, coeffs: Sequence[Callable], duals: np.ndarray):
        duals = np.asarray(duals, dtype=complex)
        if duals.ndim != 2 or len(coeffs) != duals.shape[0]:
            raise ValueError("need one coefficient channel per dual vector")
        self.coeffs = tuple(coeffs)
        self.duals = duals

    def coefficient_values(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return np.stack([np.asarray(c(times), dtype=complex) for c in self.coeffs])

    def at(self, t: float) -> np.ndarray:
        c = np.array([c_fn(t) for c_fn in self.coeffs], dtype=complex)
        return c @ self.duals

    def assemble(self, values_column: np.ndarray) -> np.ndarray:
        return values_column @ self.duals


def block_matrix(n_comp: int, block_dim: int, blocks: dict) -> np.ndarray:
    """Assemble a (n_comp*block_dim)^2 matrix from {(row, col): block}."""
    out = np.zeros((n_comp * block_dim, n_comp * block_dim), dtype=complex)
    for (i, j), b in blocks.items():
        out[
            i * block_dim : (i + 1) * block_dim, j * block_dim : (j + 1) * block_dim
        ] = b
    return out


def block_dual(n_comp: int, block_dim: int, entries: dict) -> np.ndarray:
    """Assemble a stacked dual vector from {component: dual}."""
    out = np.zeros(n_comp * block_dim, dtype=complex)
    for i, w in entries.items():
        out[i * block_dim : (i + 1) * block_dim] = w
    return out


def _const_one(times):
    return np.ones_like(np.asarray(times, dtype=float), dtype=complex)


def _envelope_channels(env) -> list:
    """[1, xi, conj(xi), |xi|^2] as vectorized coefficient functions."""
    return [
        _const_one,
        lambda ts: np.asarray(env(ts), dtype=complex),
        lambda ts: np.conj(np.asarray(env(ts), dtype=complex)),
        lambda ts: np.abs(np.asarray(env(ts), dtype=complex)) ** 2,
    ]


@dataclass
class CompiledProcess:
    """All compiled pieces one measurement scenario needs.

    ``drift`` is the trace-preserving deterministic generator (the
    quadrature filter's dt part, also the unconditional master equation),
    ``nojump`` the trace-decreasing zero-detection generator, ``diffusion``
    the linear part of the innovation coefficient and ``jump`` the
    un-normalized detection map.  ``intensity`` and ``quadrature`` are the
    posterior rate functionals; ``trace`` and ``excited`` are constant
    duals giving the physical-state trace and excited-level population.
    """

    variant: str
    level: str
    labels: tuple
    sys_dim: int
    dim: int
    drift: TimeDependentMatrix
    nojump: TimeDependentMatrix
    diffusion: TimeDependentMatrix
    jump: TimeDependentMatrix
    intensity: TimeDependentDual
    quadrature: TimeDependentDual
    trace: np.ndarray
    excited: np.ndarray
    rho_block: tuple = field(default=())  # component indices summing to rho_S
    #: True at node times where the pulse is exhausted and the auxiliary
    #: matrices must be hard-zeroed (photon variant, system side only)
    aux_clamp: Callable | None = None
    aux_start: int | None = None  # first stacked column of the auxiliaries


def _excited_projector(d: int) -> np.ndarray:
    proj = np.zeros((d, d), dtype=complex)
    proj[d - 1, d - 1] = 1.0
    return proj


def _compile_photon_reduced(model: SystemModel, fs: PhotonComboField) -> CompiledProcess:
    d = model.dim
    d2 = d * d
    L, Ld, S, Sd = model.L, model.Ld, model.S, model.Sd
    LdL, LdS, SdL = model.LdL, model.LdS, model.SdL
    eye_sop = np.eye(d2, dtype=complex)
    lind = sop_lindblad(model)
    nojump0 = (
        -1j * (sop_left(model.H) - sop_right(model.H))
        - 0.5 * (sop_left(LdL) + sop_right(LdL))
    )
    com_s_ld = sop_sandwich(S, Ld) - sop_left(LdS)      # X -> [S X, L^dag]
    com_l_sd = sop_sandwich(L, Sd) - sop_right(SdL)     # X -> [L, X S^dag]
    scatter = sop_sandwich(S, Sd) - eye_sop             # X -> S X S^dag - X

    def diag(b):
        return {(i, i): b for i in range(4)}

    drift = np.stack([
        block_matrix(4, d2, diag(lind)),
        block_matrix(4, d2, {(0, 1): com_s_ld, (2, 3): com_s_ld}),
        block_matrix(4, d2, {(0, 2): com_l_sd, (1, 3): com_l_sd}),
        block_matrix(4, d2, {(0, 3): scatter}),
    ])
    nojump = np.stack([
        block_matrix(4, d2, diag(nojump0)),
        block_matrix(4, d2, {(0, 1): -sop_left(LdS), (2, 3): -sop_left(LdS)}),
        block_matrix(4, d2, {(0, 2): -sop_right(SdL), (1, 3): -sop_right(SdL)}),
        block_matrix(4, d2, {(0, 3): -eye_sop}),
    ])
    diffusion = np.stack([
        block_matrix(4, d2, diag(sop_left(L) + sop_right(Ld))),
        block_matrix(4, d2, {(0, 1): sop_left(S), (2, 3): sop_left(S)}),
        block_matrix(4, d2, {(0, 2): sop_right(Sd), (1, 3): sop_right(Sd)}),
        block_matrix(4, d2, {}),
    ])
    jump = np.stack([
        block_matrix(4, d2, diag(sop_sandwich(L, Ld))),
        block_matrix(4, d2, {(0, 1): sop_sandwich(S, Ld), (2, 3): sop_sandwich(S, Ld)}),
        block_matrix(4, d2, {(0, 2): sop_sandwich(L, Sd), (1, 3): sop_sandwich(L, Sd)}),
        block_matrix(4, d2, {(0, 3): sop_sandwich(S, Sd)}),
    ])
    intensity = np.stack([
        block_dual(4, d2, {0: trace_dual(LdL)}),
        block_dual(4, d2, {1: trace_dual(LdS)}),
        block_dual(4, d2, {2: trace_dual(SdL)}),
        block_dual(4, d2, {3: trace_dual(np.eye(d))}),
    ])
    quadrature = np.stack([
        block_dual(4, d2, {0: trace_dual(L + Ld)}),
        block_dual(4, d2, {1: trace_dual(S)}),
        block_dual(4, d2, {2: trace_dual(Sd)}),
        block_dual(4, d2, {}),
    ])
    chans = _envelope_channels(fs.xi)
    xi = fs.xi
    return CompiledProcess(
        variant="photon_combo",
        level="reduced",
        labels=CASCADE_LABELS,
        sys_dim=d,
        dim=4 * d2,
        drift=TimeDependentMatrix(chans, drift),
        nojump=TimeDependentMatrix(chans, nojump),
        diffusion=TimeDependentMatrix(chans, diffusion),
        jump=TimeDependentMatrix(chans, jump),
        intensity=TimeDependentDual(chans, intensity),
        quadrature=TimeDependentDual(chans, quadrature),
        trace=block_dual(4, d2, {0: trace_dual(np.eye(d))}),
        excited=block_dual(4, d2, {0: trace_dual(_excited_projector(d))}),
        rho_block=(0,),
        aux_clamp=lambda ts: np.asarray(xi.tail_integral(ts)) < TAIL_EPS,
        aux_start=d2,
    )


def _compile_coherent_reduced(
    model: SystemModel, fs: CoherentMixtureField
) -> CompiledProcess:
    d = model.dim
    d2 = d * d
    n = fs.n_components
    L, Ld, S, Sd = model.L, model.Ld, model.S, model.Sd
    LdL, LdS, SdL = model.LdL, model.LdS, model.SdL
    eye_sop = np.eye(d2, dtype=complex)
    lind = sop_lindblad(model)
    nojump0 = (
        -1j * (sop_left(model.H) - sop_right(model.H))
        - 0.5 * (sop_left(LdL) + sop_right(LdL))
    )
    com_s_ld = sop_sandwich(S, Ld) - sop_left(LdS)
    com_l_sd = sop_sandwich(L, Sd) - sop_right(SdL)
    scatter = sop_sandwich(S, Sd) - eye_sop

    chans: list = [_const_one]
    for alpha in fs.alphas:
        chans.extend(_envelope_channels(alpha)[1:])

    def per_component(const_block, blocks_by_kind):
        """Stack [const] + n * [alpha, conj(alpha), |alpha|^2] channel matrices."""
        mats = [block_matrix(n, d2, {(i, i): const_block for i in range(n)})]
        for i in range(n):
            for b in blocks_by_kind:
                mats.append(block_matrix(n, d2, {(i, i): b} if b is not None else {}))
        return np.stack(mats)

    drift = per_component(lind, [com_s_ld, com_l_sd, scatter])
    nojump = per_component(nojump0, [-sop_left(LdS), -sop_right(SdL), -eye_sop])
    diffusion = per_component(
        sop_left(L) + sop_right(Ld), [sop_left(S), sop_right(Sd), None]
    )
    jump = per_component(
        sop_sandwich(L, Ld),
        [sop_sandwich(S, Ld), sop_sandwich(L, Sd), sop_sandwich(S, Sd)],
    )

    def per_component_dual(const_dual, duals_by_kind):
        out = [block_dual(n, d2, {i: const_dual for i in range(n)})]
        for i in range(n):
            for w in duals_by_kind:
                out.append(block_dual(n, d2, {i: w} if w is not None else {}))
        return np.stack(out)

    intensity = per_component_dual(
        trace_dual(LdL), [trace_dual(LdS), trace_dual(SdL), trace_dual(np.eye(d))]
    )
    quadrature = per_component_dual(
        trace_dual(L + Ld), [trace_dual(S), trace_dual(Sd), None]
    )
    all_comp = range(n)
    return CompiledProcess(
        variant="coherent_mixture",
        level="reduced",
        labels=coherent_labels(n),
        sys_dim=d,
        dim=n * d2,
        drift=TimeDependentMatrix(chans, drift),
        nojump=TimeDependentMatrix(chans, nojump),
        diffusion=TimeDependentMatrix(chans, diffusion),
        jump=TimeDependentMatrix(chans, jump),
        intensity=TimeDependentDual(chans, intensity),
        quadrature=TimeDependentDual(chans, quadrature),
        trace=block_dual(n, d2, {i: trace_dual(np.eye(d)) for i in all_comp}),
        excited=block_dual(
            n, d2, {i: trace_dual(_excited_projector(d)) for i in all_comp}
        ),
        rho_block=tuple(all_comp),
    )


def compile_reduced_process(model: SystemModel, fs: FieldState) -> CompiledProcess:
    """Compile the system-side filter equations for the given field."""
    if isinstance(fs, PhotonComboField):
        return _compile_photon_reduced(model, fs)
    if isinstance(fs, CoherentMixtureField):
        return _compile_coherent_reduced(model, fs)
    raise ValueError(f"unknown field state {fs!r}")


def compile_fock_generator(model: SystemModel, xi) -> TimeDependentMatrix:
    """Compiled generator of the single-photon ladder (rho00..rho11)."""
    d2 = model.dim * model.dim
    L, Ld, S, Sd = model.L, model.Ld, model.S, model.Sd
    lind = sop_lindblad(model)
    com_s_ld = sop_sandwich(S, Ld) - sop_left(model.LdS)
    com_l_sd = sop_sandwich(L, Sd) - sop_right(model.SdL)
    scatter = sop_sandwich(S, Sd) - np.eye(d2, dtype=complex)
    mats = np.stack([
        block_matrix(4, d2, {(i, i): lind for i in range(4)}),
        block_matrix(4, d2, {(1, 0): com_s_ld, (3, 2): com_s_ld}),
        block_matrix(4, d2, {(2, 0): com_l_sd, (3, 1): com_l_sd}),
        block_matrix(4, d2, {(3, 0): scatter}),
    ])
    return TimeDependentMatrix(_envelope_channels(xi), mats)


def initial_reduced_vec(rho0: np.ndarray, fs: FieldState) -> np.ndarray:
    """Stacked initial vector matching ``compile_reduced_process``."""
    rho0 = np.asarray(rho0, dtype=complex)
    if isinstance(fs, PhotonComboField):
        g = fs.gamma
        stack = np.stack([rho0, g.g01 * rho0, g.g10 * rho0, g.g11 * rho0])
    else:
        stack = np.stack([w * rho0 for w in fs.weights])
    return stack.reshape(-1)

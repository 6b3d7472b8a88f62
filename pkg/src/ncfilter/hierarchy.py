"""Deterministic reduced dynamics.

Three coupled families of matrices are integrated jointly:

* the Fock hierarchy (rho00, rho10, rho01, rho11), whose gamma-weighted
  combination gives the physical state for a vacuum / single-photon
  combination;
* the source-picture family (rho_s, rho_minus, rho_plus, rho_mp), which
  evolves the physical state directly next to three auxiliary matrices;
* one matrix per component for a mixture of coherent states, with the
  mixture weights folded into the initial conditions so that the
  physical state is the plain sum of the components.

States are stored as a labeled stack of d x d matrices.  The integrator
is classic fixed-step RK4 with coefficients evaluated at the substage
times, which keeps fourth order with time-dependent pulses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .envelopes import CoherentMixtureField, FieldState, PhotonComboField
from .errors import IntegrationError
from .operators import SystemModel, lindblad_apply

FOCK_LABELS = ("rho00", "rho10", "rho01", "rho11")
CASCADE_LABELS = ("rho_s", "rho_minus", "rho_plus", "rho_mp")


def coherent_labels(n: int) -> tuple:
    return tuple(f"rho_{i}{i}" for i in range(n))


@dataclass
class MatrixFamily:
    """A labeled stack of equally sized square matrices."""

    labels: tuple
    mats: np.ndarray  # shape (len(labels), d, d)

    def __post_init__(self):
        self.mats = np.asarray(self.mats, dtype=complex)
        if self.mats.ndim != 3 or self.mats.shape[0] != len(self.labels):
            raise ValueError(
                f"expected {len(self.labels)} stacked matrices, got shape {self.mats.shape}"
            )
        if self.mats.shape[1] != self.mats.shape[2]:
            raise ValueError("family matrices must be square")

    @property
    def dim(self) -> int:
        return self.mats.shape[-1]

    def __getitem__(self, label: str) -> np.ndarray:
        return self.mats[self.labels.index(label)]

    def copy(self) -> "MatrixFamily":
        return MatrixFamily(self.labels, self.mats.copy())


def initial_fock_state(rho0: np.ndarray) -> MatrixFamily:
    """rho00(0) = rho11(0) = rho(0); cross matrices start at zero."""
    rho0 = np.asarray(rho0, dtype=complex)
    zero = np.zeros_like(rho0)
    return MatrixFamily(FOCK_LABELS, np.stack([rho0, zero, zero, rho0]))


def initial_cascade_state(rho0: np.ndarray, gamma) -> MatrixFamily:
    """rho_s(0) = rho(0); auxiliaries carry g01, g10, g11."""
    rho0 = np.asarray(rho0, dtype=complex)
    return MatrixFamily(
        CASCADE_LABELS,
        np.stack([rho0, gamma.g01 * rho0, gamma.g10 * rho0, gamma.g11 * rho0]),
    )


def initial_coherent_state(rho0: np.ndarray, weights: Sequence[float]) -> MatrixFamily:
    """One component per coherent amplitude, weight folded into the trace."""
    rho0 = np.asarray(rho0, dtype=complex)
    return MatrixFamily(
        coherent_labels(len(weights)), np.stack([w * rho0 for w in weights])
    )


def _check_family(state: MatrixFamily, labels: tuple, model: SystemModel) -> None:
    if state.labels != labels:
        raise ValueError(f"expected family {labels}, got {state.labels}")
    if state.dim != model.dim:
        raise ValueError(
            f"dimension mismatch: state dim {state.dim} vs model dim {model.dim}"
        )


def rhs_fock_hierarchy(
    state: MatrixFamily, t: float, model: SystemModel, xi
) -> MatrixFamily:
    """Time derivative of the Fock hierarchy driven by profile ``xi``."""
    _check_family(state, FOCK_LABELS, model)
    L, Ld, S, Sd = model.L, model.Ld, model.S, model.Sd
    x = complex(xi(t))
    r00, r10, r01, r11 = state.mats
    d00 = lindblad_apply(model, r00)
    sr00 = S @ r00
    d10 = lindblad_apply(model, r10) + x * (sr00 @ Ld - Ld @ sr00)
    r00sd = r00 @ Sd
    d01 = lindblad_apply(model, r01) + np.conj(x) * (L @ r00sd - r00sd @ L)
    sr01 = S @ r01
    r10sd = r10 @ Sd
    d11 = (
        lindblad_apply(model, r11)
        + x * (sr01 @ Ld - Ld @ sr01)
        + np.conj(x) * (L @ r10sd - r10sd @ L)
        + abs(x) ** 2 * (S @ r00 @ Sd - r00)
    )
    return MatrixFamily(FOCK_LABELS, np.stack([d00, d10, d01, d11]))


def rhs_cascade_hierarchy(
    state: MatrixFamily, t: float, model: SystemModel, xi
) -> MatrixFamily:
    """Time derivative of the physical state plus its three auxiliaries."""
    _check_family(state, CASCADE_LABELS, model)
    L, Ld, S, Sd = model.L, model.Ld, model.S, model.Sd
    x = complex(xi(t))
    rs, rm, rp, rmp = state.mats
    srm = S @ rm
    rpsd = rp @ Sd
    ds = (
        lindblad_apply(model, rs)
        + x * (srm @ Ld - Ld @ srm)
        + np.conj(x) * (L @ rpsd - rpsd @ L)
        + abs(x) ** 2 * (S @ rmp @ Sd - rmp)
    )
    rmpsd = rmp @ Sd
    dm = lindblad_apply(model, rm) + np.conj(x) * (L @ rmpsd - rmpsd @ L)
    srmp = S @ rmp
    dp = lindblad_apply(model, rp) + x * (srmp @ Ld - Ld @ srmp)
    dmp = lindblad_apply(model, rmp)
    return MatrixFamily(CASCADE_LABELS, np.stack([ds, dm, dp, dmp]))


def rhs_coherent_mixture(
    state: MatrixFamily, t: float, model: SystemModel, alphas, weights=None
) -> MatrixFamily:
    """Per-component drive: each matrix sees its own coherent amplitude."""
    if weights is not None and len(weights) != len(alphas):
        raise ValueError("component count mismatch between weights and alphas")
    if state.labels != coherent_labels(len(alphas)):
        raise ValueError(
            f"component count mismatch: state has {len(state.labels)}, "
            f"field has {len(alphas)}"
        )
    if state.dim != model.dim:
        raise ValueError("dimension mismatch between state and model")
    L, Ld, S, Sd = model.L, model.Ld, model.S, model.Sd
    derivs = []
    for rho, alpha in zip(state.mats, alphas):
        a = complex(alpha(t))
        srho = S @ rho
        rhosd = rho @ Sd
        derivs.append(
            lindblad_apply(model, rho)
            + a * (srho @ Ld - Ld @ srho)
            + np.conj(a) * (L @ rhosd - rhosd @ L)
            + abs(a) ** 2 * (S @ rho @ Sd - rho)
        )
    return MatrixFamily(state.labels, np.stack(derivs))


def combine_fock(gamma, state: MatrixFamily) -> np.ndarray:
    """Physical state from the Fock hierarchy (cross pairing g01 <-> rho10)."""
    r00, r10, r01, r11 = state.mats
    return gamma.g00 * r00 + gamma.g01 * r10 + gamma.g10 * r01 + gamma.g11 * r11


def combine_coherent(state: MatrixFamily) -> np.ndarray:
    """Physical state of a coherent mixture: plain component sum."""
    return state.mats.sum(axis=0)


@dataclass
class DeterministicSolution:
    """State family at every node of a uniform grid."""

    labels: tuple
    times: np.ndarray
    mats: np.ndarray  # shape (n_nodes, K, d, d)

    def state_at(self, idx: int) -> MatrixFamily:
        return MatrixFamily(self.labels, self.mats[idx])

    def component(self, label: str) -> np.ndarray:
        return self.mats[:, self.labels.index(label)]


def integrate_deterministic(
    rhs: Callable[[MatrixFamily, float], MatrixFamily],
    state0: MatrixFamily,
    grid: np.ndarray,
) -> DeterministicSolution:
    """Classic RK4 over a uniform grid, storing the state at every node."""
    times = np.asarray(grid, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise ValueError("grid must contain at least two nodes")
    steps = np.diff(times)
    dt = steps[0]
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-9 * max(dt, 1.0):
        raise ValueError("grid must be uniform with positive step")

    labels = state0.labels
    out = np.empty((times.size,) + state0.mats.shape, dtype=complex)
    out[0] = state0.mats
    y = state0.copy()
    for i in range(times.size - 1):
        t = times[i]
        k1 = rhs(y, t).mats
        k2 = rhs(MatrixFamily(labels, y.mats + 0.5 * dt * k1), t + 0.5 * dt).mats
        k3 = rhs(MatrixFamily(labels, y.mats + 0.5 * dt * k2), t + 0.5 * dt).mats
        k4 = rhs(MatrixFamily(labels, y.mats + dt * k3), t + dt).mats
        y = MatrixFamily(labels, y.mats + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4))
        if not np.all(np.isfinite(y.mats.view(float))):
            raise IntegrationError(f"non-finite state at t = {times[i + 1]:.6g}")
        out[i + 1] = y.mats
    return DeterministicSolution(labels, times, out)


def _check_variant(state: MatrixFamily, fs: FieldState) -> None:
    if isinstance(fs, PhotonComboField):
        if state.labels != CASCADE_LABELS:
            raise ValueError("photon_combo expects the (rho_s, ...) family")
    elif isinstance(fs, CoherentMixtureField):
        if state.labels != coherent_labels(fs.n_components):
            raise ValueError("coherent_mixture expects one matrix per component")
    else:
        raise ValueError(f"unknown field state {fs!r}")


def expected_count_rate(
    state: MatrixFamily, t: float, model: SystemModel, fs: FieldState
) -> float:
    """Unconditional mean photon rate leaving the system."""
    _check_variant(state, fs)
    LdL, LdS, SdL = model.LdL, model.LdS, model.SdL
    if isinstance(fs, PhotonComboField):
        x = complex(fs.xi(t))
        rs, rm, rp, _ = state.mats
        val = (
            np.trace(LdL @ rs)
            + x * np.trace(LdS @ rm)
            + np.conj(x) * np.trace(SdL @ rp)
            + fs.gamma.g11 * abs(x) ** 2
        )
    else:
        val = 0j
        for rho, alpha in zip(state.mats, fs.alphas):
            a = complex(alpha(t))
            val += (
                np.trace(LdL @ rho)
                + a * np.trace(LdS @ rho)
                + np.conj(a) * np.trace(SdL @ rho)
                + abs(a) ** 2 * np.trace(rho)
            )
    rate = float(np.real(val))
    return 0.0 if -1e-10 < rate < 0.0 else rate


def expected_quadrature_rate(
    state: MatrixFamily, t: float, model: SystemModel, fs: FieldState
) -> float:
    """Unconditional mean quadrature rate of the output field."""
    _check_variant(state, fs)
    L, Ld, S, Sd = model.L, model.Ld, model.S, model.Sd
    if isinstance(fs, PhotonComboField):
        x = complex(fs.xi(t))
        rs, rm, rp, _ = state.mats
        val = (
            x * np.trace(S @ rm)
            + np.conj(x) * np.trace(Sd @ rp)
            + np.trace((L + Ld) @ rs)
        )
    else:
        val = np.trace((L + Ld) @ combine_coherent(state))
        for rho, alpha in zip(state.mats, fs.alphas):
            a = complex(alpha(t))
            val += a * np.trace(S @ rho) + np.conj(a) * np.trace(Sd @ rho)
    return float(np.real(val))

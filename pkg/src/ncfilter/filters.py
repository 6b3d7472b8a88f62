"""Conditional (filtered) dynamics operations.

The a-posteriori state of the system is carried by the same labeled
matrix families as the deterministic hierarchy: (rho_s, rho_minus,
rho_plus, rho_mp) for a vacuum / single-photon combination, one matrix
per component for a coherent mixture.  All maps here are pure functions
of the state; the trajectory engine composes them into time stepping.

Counting measurements are described by a posterior intensity, a
between-jump drift (the compensated form, with the detection term
folded in) and a jump map.  The survival probability of zero detections
obeys a linear, trace-decreasing system that is kept separate because
it is also an observable in its own right.  Quadrature (homodyne)
measurements are described by a posterior rate and a diffusion term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envelopes import CoherentMixtureField, FieldState, PhotonComboField
from .errors import VanishingIntensityError
from .hierarchy import (
    CASCADE_LABELS,
    MatrixFamily,
    coherent_labels,
    rhs_cascade_hierarchy,
    rhs_coherent_mixture,
)
from .operators import SystemModel

#: below this intensity a detection event is treated as impossible
JUMP_INTENSITY_FLOOR = 1e-14


@dataclass
class FilterState(MatrixFamily):
    """Matrix family holding the a-posteriori state."""

    normalized: bool = True

    def copy(self) -> "FilterState":
        return FilterState(self.labels, self.mats.copy(), self.normalized)


def initial_filter_state(rho0: np.ndarray, fs: FieldState) -> FilterState:
    rho0 = np.asarray(rho0, dtype=complex)
    if isinstance(fs, PhotonComboField):
        g = fs.gamma
        mats = np.stack([rho0, g.g01 * rho0, g.g10 * rho0, g.g11 * rho0])
        return FilterState(CASCADE_LABELS, mats)
    mats = np.stack([w * rho0 for w in fs.weights])
    return FilterState(coherent_labels(fs.n_components), mats)


def _check_variant(state: MatrixFamily, fs: FieldState) -> None:
    if isinstance(fs, PhotonComboField):
        if state.labels != CASCADE_LABELS:
            raise ValueError("photon_combo expects the (rho_s, ...) family")
    elif isinstance(fs, CoherentMixtureField):
        if state.labels != coherent_labels(fs.n_components):
            raise ValueError("coherent_mixture expects one matrix per component")
    else:
        raise ValueError(f"unknown field state {fs!r}")


def system_state(state: MatrixFamily, fs: FieldState) -> np.ndarray:
    """The physical (system) density matrix carried by the family."""
    if isinstance(fs, PhotonComboField):
        return state.mats[0]
    return state.mats.sum(axis=0)


def _jump_numerators(
    state: MatrixFamily, t: float, model: SystemModel, fs: FieldState
) -> np.ndarray:
    """Un-normalized post-detection matrices, one per family member."""
    L, Ld, S, Sd = model.L, model.Ld, model.S, model.Sd
    if isinstance(fs, PhotonComboField):
        x = complex(fs.xi(t))
        rs, rm, rp, rmp = state.mats
        new_s = (
            L @ rs @ Ld
            + x * (S @ rm @ Ld)
            + np.conj(x) * (L @ rp @ Sd)
            + abs(x) ** 2 * (S @ rmp @ Sd)
        )
        new_m = L @ rm @ Ld + np.conj(x) * (L @ rmp @ Sd)
        new_p = L @ rp @ Ld + x * (S @ rmp @ Ld)
        new_mp = L @ rmp @ Ld
        return np.stack([new_s, new_m, new_p, new_mp])
    out = []
    for rho, alpha in zip(state.mats, fs.alphas):
        a = complex(alpha(t))
        out.append(
            L @ rho @ Ld
            + np.conj(a) * (L @ rho @ Sd)
            + a * (S @ rho @ Ld)
            + abs(a) ** 2 * (S @ rho @ Sd)
        )
    return np.stack(out)


def counting_intensity(
    state: FilterState, t: float, model: SystemModel, fs: FieldState
) -> float:
    """Posterior detection rate; tiny negative round-off is clamped to 0."""
    _check_variant(state, fs)
    LdL, LdS, SdL = model.LdL, model.LdS, model.SdL
    if isinstance(fs, PhotonComboField):
        x = complex(fs.xi(t))
        rs, rm, rp, rmp = state.mats
        val = (
            np.trace(LdL @ rs)
            + x * np.trace(LdS @ rm)
            + np.conj(x) * np.trace(SdL @ rp)
            + abs(x) ** 2 * np.trace(rmp)
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
    return max(rate, 0.0) if rate > -1e-10 else rate


def counting_drift(
    state: FilterState, t: float, model: SystemModel, fs: FieldState
) -> MatrixFamily:
    """Between-detection derivative with the compensator folded in.

    Equal to (hierarchy terms) - (jump numerators) + intensity * state, so
    no division by the intensity ever occurs and the vacuum limit is safe.
    """
    _check_variant(state, fs)
    if isinstance(fs, PhotonComboField):
        hier = rhs_cascade_hierarchy(
            MatrixFamily(state.labels, state.mats), t, model, fs.xi
        ).mats
    else:
        hier = rhs_coherent_mixture(
            MatrixFamily(state.labels, state.mats), t, model, fs.alphas
        ).mats
    k = counting_intensity(state, t, model, fs)
    return MatrixFamily(
        state.labels, hier - _jump_numerators(state, t, model, fs) + k * state.mats
    )


def counting_jump(
    state: FilterState, t: float, model: SystemModel, fs: FieldState
) -> FilterState:
    """Post-detection state; raises if the intensity has vanished."""
    _check_variant(state, fs)
    k = counting_intensity(state, t, model, fs)
    if k < JUMP_INTENSITY_FLOOR:
        raise VanishingIntensityError(
            f"jump at vanishing intensity (k = {k:.3e} at t = {t:.6g})"
        )
    return FilterState(state.labels, _jump_numerators(state, t, model, fs) / k)


def nocount_rhs(
    state: MatrixFamily, t: float, model: SystemModel, fs: FieldState
) -> MatrixFamily:
    """Linear generator of the zero-detection (survival) system.

    The trace of the leading matrix is the probability of no detection up
    to t; it never increases along solutions.
    """
    _check_variant(state, fs)
    H, L, Ld, LdL, LdS, SdL, Sd = (
        model.H, model.L, model.Ld, model.LdL, model.LdS, model.SdL, model.Sd,
    )

    def nojump(rho):
        return -1j * (H @ rho - rho @ H) - 0.5 * (LdL @ rho + rho @ LdL)

    if isinstance(fs, PhotonComboField):
        x = complex(fs.xi(t))
        rs, rm, rp, rmp = state.mats
        ds = nojump(rs) - x * (LdS @ rm) - np.conj(x) * (rp @ SdL) - abs(x) ** 2 * rmp
        dm = nojump(rm) - np.conj(x) * (rmp @ SdL)
        dp = nojump(rp) - x * (LdS @ rmp)
        dmp = nojump(rmp)
        return MatrixFamily(state.labels, np.stack([ds, dm, dp, dmp]))
    out = []
    for rho, alpha in zip(state.mats, fs.alphas):
        a = complex(alpha(t))
        out.append(
            nojump(rho) - a * (LdS @ rho) - np.conj(a) * (rho @ SdL) - abs(a) ** 2 * rho
        )
    return MatrixFamily(state.labels, np.stack(out))


def quadrature_rate(
    state: FilterState, t: float, model: SystemModel, fs: FieldState
) -> float:
    """Posterior mean rate of the measured quadrature."""
    _check_variant(state, fs)
    L, Ld, S, Sd = model.L, model.Ld, model.S, model.Sd
    if isinstance(fs, PhotonComboField):
        x = complex(fs.xi(t))
        rs, rm, rp, _ = state.mats
        val = (
            np.trace((L + Ld) @ rs)
            + x * np.trace(S @ rm)
            + np.conj(x) * np.trace(Sd @ rp)
        )
    else:
        val = np.trace((L + Ld) @ state.mats.sum(axis=0))
        for rho, alpha in zip(state.mats, fs.alphas):
            a = complex(alpha(t))
            val += a * np.trace(S @ rho) + np.conj(a) * np.trace(Sd @ rho)
    return float(np.real(val))


def homodyne_diffusion(
    state: FilterState, t: float, model: SystemModel, fs: FieldState
) -> MatrixFamily:
    """Coefficient of the innovation increment in the quadrature filter."""
    _check_variant(state, fs)
    L, Ld, S, Sd = model.L, model.Ld, model.S, model.Sd
    v = quadrature_rate(state, t, model, fs)
    if isinstance(fs, PhotonComboField):
        x = complex(fs.xi(t))
        rs, rm, rp, rmp = state.mats
        gs = L @ rs + rs @ Ld + x * (S @ rm) + np.conj(x) * (rp @ Sd) - v * rs
        gm = L @ rm + rm @ Ld + np.conj(x) * (rmp @ Sd) - v * rm
        gp = L @ rp + rp @ Ld + x * (S @ rmp) - v * rp
        gmp = L @ rmp + rmp @ Ld - v * rmp
        return MatrixFamily(state.labels, np.stack([gs, gm, gp, gmp]))
    out = []
    for rho, alpha in zip(state.mats, fs.alphas):
        a = complex(alpha(t))
        out.append(
            L @ rho + rho @ Ld + a * (S @ rho) + np.conj(a) * (rho @ Sd) - v * rho
        )
    return MatrixFamily(state.labels, np.stack(out))


def homodyne_rhs(
    state: FilterState,
    t: float,
    model: SystemModel,
    fs: FieldState,
    dW: float,
    dt: float,
) -> MatrixFamily:
    """One Ito increment of the quadrature filter: drift*dt + diffusion*dW."""
    if not np.isfinite(dW):
        raise ValueError("dW must be finite")
    _check_variant(state, fs)
    if isinstance(fs, PhotonComboField):
        drift = rhs_cascade_hierarchy(
            MatrixFamily(state.labels, state.mats), t, model, fs.xi
        ).mats
    else:
        drift = rhs_coherent_mixture(
            MatrixFamily(state.labels, state.mats), t, model, fs.alphas
        ).mats
    diff = homodyne_diffusion(state, t, model, fs).mats
    return MatrixFamily(state.labels, drift * dt + diff * dW)


def renormalize(state: FilterState, fs: FieldState) -> FilterState:
    """Divide the whole family by the trace of the system state."""
    tr = float(np.real(np.trace(system_state(state, fs))))
    if tr <= 0:
        raise VanishingIntensityError(f"state trace collapsed to {tr:.3e}")
    return FilterState(state.labels, state.mats / tr)

"""Independent ground truth on the system (x) source space.

The non-classical input field is synthesized by a two-level source
cascaded in front of the system: its decay into the vacuum produces the
desired field, and the joint state of system and source obeys ordinary
vacuum-input equations on the doubled space.  Everything the reduced
modules compute can therefore be cross-checked here: the unconditional
master equation, both measurement filters (with the detection record or
noise injected), the zero-detection propagator, and multi-time count
densities.

Reduction back to the system-side families divides the source blocks by
the remaining pulse weight, with the same guard the coupling uses, so
differential tests stay meaningful after the pulse has passed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .envelopes import (
    TAIL_EPS,
    Envelope,
    FieldState,
    PhotonComboField,
    lambda_coupling,
)
from .errors import VanishingIntensityError
from .filters import JUMP_INTENSITY_FLOOR
from .generators import (
    CompiledProcess,
    TimeDependentDual,
    TimeDependentMatrix,
    _const_one,
)
from .hierarchy import CASCADE_LABELS, MatrixFamily, coherent_labels
from .operators import (
    SystemModel,
    dagger,
    identity,
    kron,
    sigma_minus,
    sigma_plus,
    sop_left,
    sop_right,
    sop_sandwich,
    trace_dual,
)


@dataclass(frozen=True)
class PhotonSourceGenerator:
    """Source coupling lambda(t) * (lowering operator)."""

    xi: Envelope
    eps: float = TAIL_EPS

    variant = "photon_combo"

    def coupling(self, t: float) -> np.ndarray:
        return lambda_coupling(self.xi, t, self.eps) * sigma_minus()


@dataclass(frozen=True)
class CoherentSourceGenerator:
    """Diagonal source coupling alpha_0(t)|0><0| + alpha_1(t)|1><1|."""

    alphas: tuple

    variant = "coherent_mixture"

    def __post_init__(self):
        if len(self.alphas) != 2:
            raise ValueError(
                "the two-level source supports exactly two coherent components"
            )

    def coupling(self, t: float) -> np.ndarray:
        return np.diag([complex(self.alphas[0](t)), complex(self.alphas[1](t))])


SourceGenerator = PhotonSourceGenerator | CoherentSourceGenerator


def source_generator_for(fs: FieldState) -> SourceGenerator:
    if isinstance(fs, PhotonComboField):
        return PhotonSourceGenerator(fs.xi)
    return CoherentSourceGenerator(tuple(fs.alphas))


def extended_initial(rho0: np.ndarray, fs: FieldState) -> np.ndarray:
    """Product initial state system (x) source."""
    rho0 = np.asarray(rho0, dtype=complex)
    if isinstance(fs, PhotonComboField):
        return kron(rho0, fs.gamma.matrix())
    if fs.n_components != 2:
        raise ValueError("extended simulation needs exactly two coherent components")
    c = np.array([math.sqrt(w) for w in fs.weights], dtype=complex)
    return kron(rho0, np.outer(c, c.conj()))


def _lifted(model: SystemModel):
    eye2 = identity(2)
    return (
        kron(model.H, eye2),
        kron(model.L, eye2),
        kron(model.S, eye2),
    )


def extended_master_rhs(
    rho_ext: np.ndarray, t: float, model: SystemModel, gen: SourceGenerator
) -> np.ndarray:
    """Unconditional derivative of the joint system-source state."""
    d2 = 2 * model.dim
    if rho_ext.shape[-2:] != (d2, d2):
        raise ValueError(
            f"extended state must be {d2} x {d2}, got {rho_ext.shape[-2:]}"
        )
    Hx, Lx, Sx = _lifted(model)
    LA = kron(identity(model.dim), gen.coupling(t))
    LAd = dagger(LA)
    Lxd = dagger(Lx)
    LdL = Lxd @ Lx
    LdA = LAd @ LA
    SLA = Sx @ LA
    lind = (
        -1j * (Hx @ rho_ext - rho_ext @ Hx)
        + Lx @ rho_ext @ Lxd
        - 0.5 * (LdL @ rho_ext + rho_ext @ LdL)
    )
    lind_a = (
        LA @ rho_ext @ LAd - 0.5 * (LdA @ rho_ext + rho_ext @ LdA)
    )
    coupling = (
        (SLA @ rho_ext) @ Lxd - Lxd @ (SLA @ rho_ext)
        + Lx @ (rho_ext @ dagger(SLA)) - (rho_ext @ dagger(SLA)) @ Lx
    )
    feed = SLA @ rho_ext @ dagger(SLA) - LA @ rho_ext @ LAd
    return lind + lind_a + coupling + feed


def jump_operator(t: float, model: SystemModel, gen: SourceGenerator) -> np.ndarray:
    """Collapse operator of the cascaded pair: L (x) I + S L_A."""
    _, Lx, Sx = _lifted(model)
    return Lx + Sx @ kron(identity(model.dim), gen.coupling(t))


def heff_apply(
    rho_ext: np.ndarray, t: float, model: SystemModel, gen: SourceGenerator
) -> np.ndarray:
    """Zero-detection generator -i H_eff rho + i rho H_eff^dag.

    H_eff = H - (i/2)(L^dag L + L_A^dag L_A + 2 L_A L^dag S); its
    anti-Hermitian part makes the trace non-increasing.
    """
    Hx, Lx, Sx = _lifted(model)
    LA = kron(identity(model.dim), gen.coupling(t))
    h_eff = Hx - 0.5j * (
        dagger(Lx) @ Lx + dagger(LA) @ LA + 2.0 * LA @ dagger(Lx) @ Sx
    )
    return -1j * (h_eff @ rho_ext) + 1j * (rho_ext @ dagger(h_eff))


def heff_propagate(
    rho_ext: np.ndarray,
    t0: float,
    t1: float,
    model: SystemModel,
    gen: SourceGenerator,
    dt: float = 1e-3,
) -> np.ndarray:
    """RK4 propagation of the un-normalized zero-detection system."""
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    if t1 == t0:
        return np.array(rho_ext, dtype=complex)
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-12)))
    h = (t1 - t0) / n
    y = np.array(rho_ext, dtype=complex)
    for i in range(n):
        t = t0 + i * h
        k1 = heff_apply(y, t, model, gen)
        k2 = heff_apply(y + 0.5 * h * k1, t + 0.5 * h, model, gen)
        k3 = heff_apply(y + 0.5 * h * k2, t + 0.5 * h, model, gen)
        k4 = heff_apply(y + h * k3, t + h, model, gen)
        y = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    return y


def extended_intensity(
    rho_ext: np.ndarray, t: float, model: SystemModel, gen: SourceGenerator
) -> float:
    c = jump_operator(t, model, gen)
    val = float(np.real(np.trace(dagger(c) @ c @ rho_ext)))
    return max(val, 0.0) if val > -1e-10 else val


def extended_quadrature_rate(
    rho_ext: np.ndarray, t: float, model: SystemModel, gen: SourceGenerator
) -> float:
    c = jump_operator(t, model, gen)
    return float(np.real(np.trace((c + dagger(c)) @ rho_ext)))


def extended_counting_step(
    rho_ext: np.ndarray,
    t: float,
    dt: float,
    jump: bool,
    model: SystemModel,
    gen: SourceGenerator,
):
    """One counting step on the joint space; returns (state, intensity at t).

    A detection applies the collapse sandwich; otherwise the un-normalized
    zero-detection system is advanced one RK4 step.  Either way the state
    is renormalized, which reinstates the compensated drift exactly.
    """
    k = extended_intensity(rho_ext, t, model, gen)
    if jump:
        if k < JUMP_INTENSITY_FLOOR:
            raise VanishingIntensityError(
                f"jump at vanishing intensity (k = {k:.3e} at t = {t:.6g})"
            )
        c = jump_operator(t, model, gen)
        new = c @ rho_ext @ dagger(c)
    else:
        new = heff_propagate(rho_ext, t, t + dt, model, gen, dt=dt)
    return new / np.real(np.trace(new)), k


def extended_homodyne_step(
    rho_ext: np.ndarray,
    t: float,
    dt: float,
    dW: float,
    model: SystemModel,
    gen: SourceGenerator,
):
    """One quadrature step: innovation kick at t, then one RK4 drift step.

    Returns (state, posterior rate at t).  The kick uses the left-endpoint
    state (Ito convention); the drift is the unconditional generator.
    """
    if not np.isfinite(dW):
        raise ValueError("dW must be finite")
    c = jump_operator(t, model, gen)
    v = float(np.real(np.trace((c + dagger(c)) @ rho_ext)))
    y = rho_ext + dW * (c @ rho_ext + rho_ext @ dagger(c) - v * rho_ext)
    h = dt
    k1 = extended_master_rhs(y, t, model, gen)
    k2 = extended_master_rhs(y + 0.5 * h * k1, t + 0.5 * h, model, gen)
    k3 = extended_master_rhs(y + 0.5 * h * k2, t + 0.5 * h, model, gen)
    k4 = extended_master_rhs(y + h * k3, t + h, model, gen)
    y = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    tr = float(np.real(np.trace(y)))
    if not np.isfinite(tr) or tr <= 0:
        raise VanishingIntensityError(f"state trace collapsed at t = {t:.6g}")
    return y / tr, v


def multi_time_density(
    jump_times,
    T: float,
    model: SystemModel,
    gen: SourceGenerator,
    initial: np.ndarray,
    dt: float = 1e-3,
) -> float:
    """Joint density of detections at the given times and none elsewhere.

    Alternates zero-detection propagation with collapse sandwiches and
    takes the trace at the horizon; with no times this is the survival
    probability itself.
    """
    times = [float(s) for s in jump_times]
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("jump times must be strictly increasing")
    if times and (times[0] <= 0 or times[-1] >= T):
        raise ValueError("jump times must lie strictly inside (0, T)")
    rho = np.array(initial, dtype=complex)
    prev = 0.0
    for s in times:
        rho = heff_propagate(rho, prev, s, model, gen, dt=dt)
        c = jump_operator(s, model, gen)
        rho = c @ rho @ dagger(c)
        prev = s
    rho = heff_propagate(rho, prev, T, model, gen, dt=dt)
    return float(np.real(np.trace(rho)))


class AncillaAmplitudes(NamedTuple):
    ground_vacuum: complex
    excited_vacuum: complex
    emitted_photon: complex


def ancilla_output_check(
    xi: Envelope, c0: complex, c1: complex, t: float
) -> AncillaAmplitudes:
    """Closed-form amplitudes of the driven source at time t.

    The joint source-field state splits into a still-excited part weighted
    by the remaining pulse weight and an already-emitted single-photon
    part; the exact solution fixes the three amplitudes below.
    """
    if abs(abs(c0) ** 2 + abs(c1) ** 2 - 1.0) > 1e-10:
        raise ValueError("source amplitudes must be normalized")
    tail = xi.tail_integral(t)
    return AncillaAmplitudes(
        ground_vacuum=complex(c0),
        excited_vacuum=complex(c1) * math.sqrt(tail),
        emitted_photon=complex(c1) * math.sqrt(max(xi.cached_norm - tail, 0.0)),
    )


# ---------------------------------------------------------------------------
# Reduction to the system-side families.
# ---------------------------------------------------------------------------


def reduce_extended_photon(
    rho_ext: np.ndarray, tail, eps: float = TAIL_EPS
) -> np.ndarray:
    """System-side family (rho_s, rho_minus, rho_plus, rho_mp) from blocks.

    ``rho_ext`` may carry leading batch dimensions; ``tail`` broadcasts
    against them.  Below ``eps`` remaining pulse weight the auxiliary
    matrices are reported as zero, matching the reduced convention.
    """
    rho_ext = np.asarray(rho_ext, dtype=complex)
    d = rho_ext.shape[-1] // 2
    blocks = rho_ext.reshape(rho_ext.shape[:-2] + (d, 2, d, 2))
    tail = np.asarray(tail, dtype=float)
    ok = tail >= eps
    inv_sqrt = np.where(ok, 1.0 / np.sqrt(np.where(ok, tail, 1.0)), 0.0)
    inv = np.where(ok, 1.0 / np.where(ok, tail, 1.0), 0.0)
    scale_shape = tail.shape + (1, 1)
    rho_s = blocks[..., :, 0, :, 0] + blocks[..., :, 1, :, 1]
    rho_m = blocks[..., :, 1, :, 0] * inv_sqrt.reshape(scale_shape)
    rho_p = blocks[..., :, 0, :, 1] * inv_sqrt.reshape(scale_shape)
    rho_mp = blocks[..., :, 1, :, 1] * inv.reshape(scale_shape)
    return np.stack([rho_s, rho_m, rho_p, rho_mp], axis=-3)


def reduce_extended_coherent(rho_ext: np.ndarray) -> np.ndarray:
    """Diagonal source blocks (one system matrix per coherent component)."""
    rho_ext = np.asarray(rho_ext, dtype=complex)
    d = rho_ext.shape[-1] // 2
    blocks = rho_ext.reshape(rho_ext.shape[:-2] + (d, 2, d, 2))
    return np.stack(
        [blocks[..., :, 0, :, 0], blocks[..., :, 1, :, 1]], axis=-3
    )


def reduced_family_from_extended(
    rho_ext: np.ndarray, t: float, fs: FieldState
) -> MatrixFamily:
    if isinstance(fs, PhotonComboField):
        mats = reduce_extended_photon(rho_ext, fs.xi.tail_integral(t))
        return MatrixFamily(CASCADE_LABELS, mats)
    mats = reduce_extended_coherent(rho_ext)
    return MatrixFamily(coherent_labels(2), mats)


# ---------------------------------------------------------------------------
# Compiled form for the trajectory engine.
# ---------------------------------------------------------------------------


def _photon_channels(gen: PhotonSourceGenerator) -> list:
    lam = lambda ts: np.asarray(lambda_coupling(gen.xi, ts, gen.eps), dtype=complex)
    return [
        _const_one,
        lam,
        lambda ts: np.conj(lam(ts)),
        lambda ts: np.abs(lam(ts)) ** 2,
    ]


def _coherent_channels(gen: CoherentSourceGenerator) -> list:
    a0, a1 = gen.alphas

    def ev(env):
        return lambda ts: np.asarray(env(ts), dtype=complex)

    e0, e1 = ev(a0), ev(a1)
    return [
        _const_one,
        e0,
        lambda ts: np.conj(e0(ts)),
        lambda ts: np.abs(e0(ts)) ** 2,
        e1,
        lambda ts: np.conj(e1(ts)),
        lambda ts: np.abs(e1(ts)) ** 2,
        lambda ts: e0(ts) * np.conj(e1(ts)),
        lambda ts: np.conj(e0(ts)) * e1(ts),
    ]


def compile_extended_process(
    model: SystemModel, gen: SourceGenerator
) -> CompiledProcess:
    """Compile the joint-space equations into the engine's generator form."""
    d = model.dim
    dx = 2 * d
    dx2 = dx * dx
    eye_d = identity(d)
    eye_x = identity(dx)
    Hx, Lx, Sx = _lifted(model)
    Lxd = dagger(Lx)
    LdLx = Lxd @ Lx
    zero = np.zeros((dx2, dx2), dtype=complex)
    zero_dual = np.zeros(dx2, dtype=complex)

    lind0 = (
        -1j * (sop_left(Hx) - sop_right(Hx))
        + sop_sandwich(Lx, Lxd)
        - 0.5 * (sop_left(LdLx) + sop_right(LdLx))
    )
    nojump0 = (
        -1j * (sop_left(Hx) - sop_right(Hx))
        - 0.5 * (sop_left(LdLx) + sop_right(LdLx))
    )
    diff0 = sop_left(Lx) + sop_right(Lxd)
    jump0 = sop_sandwich(Lx, Lxd)

    if isinstance(gen, PhotonSourceGenerator):
        chans = _photon_channels(gen)
        sm = sigma_minus()
        s_sm = kron(model.S, sm)            # S L_A / lambda
        sd_sp = dagger(s_sm)
        lds_sm = kron(model.LdS, sm)        # L_A L^dag S / lambda
        sdl_sp = dagger(lds_sm)
        n_anc = kron(eye_d, sigma_plus() @ sm)
        drift = np.stack([
            lind0,
            sop_sandwich(s_sm, Lxd) - sop_left(Lxd @ s_sm),
            sop_sandwich(Lx, sd_sp) - sop_right(sd_sp @ Lx),
            sop_sandwich(s_sm, sd_sp) - 0.5 * (sop_left(n_anc) + sop_right(n_anc)),
        ])
        nojump = np.stack([
            nojump0,
            -sop_left(lds_sm),
            -sop_right(sdl_sp),
            -0.5 * (sop_left(n_anc) + sop_right(n_anc)),
        ])
        diffusion = np.stack([diff0, sop_left(s_sm), sop_right(sd_sp), zero])
        jump = np.stack([
            jump0,
            sop_sandwich(s_sm, Lxd),
            sop_sandwich(Lx, sd_sp),
            sop_sandwich(s_sm, sd_sp),
        ])
        intensity = np.stack([
            trace_dual(LdLx),
            trace_dual(lds_sm),
            trace_dual(sdl_sp),
            trace_dual(n_anc),
        ])
        quadrature = np.stack([
            trace_dual(Lx + Lxd),
            trace_dual(s_sm),
            trace_dual(sd_sp),
            zero_dual,
        ])
        variant = "photon_combo"
    else:
        chans = _coherent_channels(gen)
        projs = [np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex)]
        s_p = [kron(model.S, p) for p in projs]
        sd_p = [dagger(m) for m in s_p]
        lds_p = [kron(model.LdS, p) for p in projs]
        sdl_p = [dagger(m) for m in lds_p]
        i_p = [kron(eye_d, p) for p in projs]

        drift_mats = [lind0]
        nojump_mats = [nojump0]
        diff_mats = [diff0]
        jump_mats = [jump0]
        k_duals = [trace_dual(LdLx)]
        v_duals = [trace_dual(Lx + Lxd)]
        for i in (0, 1):
            drift_mats += [
                sop_sandwich(s_p[i], Lxd) - sop_left(Lxd @ s_p[i]),
                sop_sandwich(Lx, sd_p[i]) - sop_right(sd_p[i] @ Lx),
                sop_sandwich(s_p[i], sd_p[i])
                - 0.5 * (sop_left(i_p[i]) + sop_right(i_p[i])),
            ]
            nojump_mats += [
                -sop_left(lds_p[i]),
                -sop_right(sdl_p[i]),
                -0.5 * (sop_left(i_p[i]) + sop_right(i_p[i])),
            ]
            diff_mats += [sop_left(s_p[i]), sop_right(sd_p[i]), zero]
            jump_mats += [
                sop_sandwich(s_p[i], Lxd),
                sop_sandwich(Lx, sd_p[i]),
                sop_sandwich(s_p[i], sd_p[i]),
            ]
            k_duals += [trace_dual(lds_p[i]), trace_dual(sdl_p[i]), trace_dual(i_p[i])]
            v_duals += [trace_dual(s_p[i]), trace_dual(sd_p[i]), zero_dual]
        # cross channels alpha_0 conj(alpha_1) and conj(alpha_0) alpha_1
        drift_mats += [
            sop_sandwich(s_p[0], sd_p[1]),
            sop_sandwich(s_p[1], sd_p[0]),
        ]
        nojump_mats += [zero, zero]
        diff_mats += [zero, zero]
        jump_mats += [
            sop_sandwich(s_p[0], sd_p[1]),
            sop_sandwich(s_p[1], sd_p[0]),
        ]
        k_duals += [zero_dual, zero_dual]
        v_duals += [zero_dual, zero_dual]
        drift = np.stack(drift_mats)
        nojump = np.stack(nojump_mats)
        diffusion = np.stack(diff_mats)
        jump = np.stack(jump_mats)
        intensity = np.stack(k_duals)
        quadrature = np.stack(v_duals)
        variant = "coherent_mixture"

    excited_proj = np.zeros((d, d), dtype=complex)
    excited_proj[d - 1, d - 1] = 1.0
    return CompiledProcess(
        variant=variant,
        level="extended",
        labels=("rho_ext",),
        sys_dim=d,
        dim=dx2,
        drift=TimeDependentMatrix(chans, drift),
        nojump=TimeDependentMatrix(chans, nojump),
        diffusion=TimeDependentMatrix(chans, diffusion),
        jump=TimeDependentMatrix(chans, jump),
        intensity=TimeDependentDual(chans, intensity),
        quadrature=TimeDependentDual(chans, quadrature),
        trace=trace_dual(eye_x),
        excited=trace_dual(kron(excited_proj, identity(2))),
        rho_block=(0,),
    )

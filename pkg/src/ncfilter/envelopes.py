"""Temporal profiles of the input field and field-state descriptions.

An envelope is either a Gaussian pulse or a tabulated complex profile.
Gaussian pulses come in two normalizations:

* ``unit-norm``: single-photon profile with integral of |xi|^2 over
  [0, inf) equal to one.  The normalizer is fixed by quadrature of the
  raw profile truncated at t = 0, so the unit norm holds on the half
  line exactly (truncation at zero is what distinguishes it from the
  full-line analytic normalization).
* ``coherent``: amplitude (2 Omega^2 / pi)^(1/4), carrying about two
  photons per pulse.

Tail integrals int_t^inf |xi|^2 ds are evaluated in closed form for
Gaussian pulses (complementary error function) and from a cumulative
trapezoid cached at construction for tabulated profiles; both paths are
vectorized because the right-hand sides query them every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

#: below this remaining-pulse weight the source coupling is switched off;
#: the discarded profile amplitude is then at most sqrt(TAIL_EPS * |lambda|^2),
#: far below the 1e-8 joint-space equivalence tolerance
TAIL_EPS = 1e-18


class GaussianEnvelope:
    """Gaussian pulse centered at ``t_c`` with bandwidth ``omega``.

    ``mode`` selects the normalization: "unit-norm" for a single-photon
    profile, "coherent" for a coherent-state amplitude.
    """

    kind = "gaussian"

    def __init__(self, omega: float, t_c: float, mode: str = "unit-norm"):
        if omega <= 0:
            raise ValueError("omega must be positive")
        if mode not in ("unit-norm", "coherent"):
            raise ValueError(f"unknown envelope mode {mode!r}")
        self.omega = float(omega)
        self.t_c = float(t_c)
        self.mode = mode

        if mode == "unit-norm":
            # normalizer from quadrature of the raw profile over [0, t_c + 12/Omega]
            upper = self.t_c + 12.0 / self.omega
            raw_sq, _ = integrate.quad(
                lambda s: math.sqrt(self.omega**2 / (2.0 * math.pi))
                * math.exp(-0.5 * self.omega**2 * (s - self.t_c) ** 2),
                0.0,
                upper,
                limit=200,
            )
            self._norm_const = math.sqrt(raw_sq)
            self._amplitude = (self.omega**2 / (2.0 * math.pi)) ** 0.25 / self._norm_const
        else:
            self._norm_const = 1.0
            self._amplitude = (2.0 * self.omega**2 / math.pi) ** 0.25

        self.cached_norm = float(self._exact_tail(np.asarray(0.0)))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("envelope is defined for t >= 0 only")
        out = self._amplitude * np.exp(-0.25 * self.omega**2 * (t - self.t_c) ** 2)
        return complex(out) if out.ndim == 0 else out.astype(complex)

    def _exact_tail(self, t):
        # int_t^inf |xi|^2 ds for |xi|^2 = amp^2 exp(-Omega^2 (s-t_c)^2 / 2)
        amp_sq = self._amplitude**2
        z = self.omega * (t - self.t_c) / math.sqrt(2.0)
        return amp_sq * math.sqrt(2.0 * math.pi) / (2.0 * self.omega) * special.erfc(z)

    def tail_integral(self, t):
        """Remaining pulse weight int_t^inf |xi(s)|^2 ds (non-increasing).

        Closed form; the coupling-to-profile identity lambda * sqrt(tail)
        = xi then holds pointwise, which the joint-space cross-checks
        rely on.
        """
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("tail integral is defined for t >= 0 only")
        out = self._exact_tail(t)
        return float(out) if out.ndim == 0 else out


class TabulatedEnvelope:
    """Complex profile given on a strictly increasing grid; zero outside.

    Values are linearly interpolated.  The norm and tail integrals are
    the exact per-cell integrals of the interpolated profile (cubic in
    time within each cell), so the tail's derivative is minus the
    interpolated intensity everywhere; the joint-space cross-checks rely
    on that consistency.
    """

    kind = "tabulated"

    def __init__(self, grid, values):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=complex)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("tabulated envelope needs at least two grid points")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("tabulation grid must be strictly increasing")
        if grid[0] < 0:
            raise ValueError("tabulation grid must start at t >= 0")
        if values.shape != grid.shape:
            raise ValueError("grid and values must have equal length")
        if not np.all(np.isfinite(values.view(float))):
            raise ValueError("tabulated values must be finite")
        self.grid = grid
        self.values = values
        self.mode = "tabulated"

        # per cell: |v + d u|^2 = c0 + 2 c1 u + 3 c2 u^2 with u in [0, 1],
        # whose integral over the cell is h (c0 + c1 + c2)
        h = np.diff(grid)
        d = np.diff(values)
        self._c0 = np.abs(values[:-1]) ** 2
        self._c1 = np.real(np.conj(values[:-1]) * d)
        self._c2 = np.abs(d) ** 2 / 3.0
        cell_mass = h * (self._c0 + self._c1 + self._c2)
        tail = np.concatenate([np.cumsum(cell_mass[::-1])[::-1], [0.0]])
        self._cell_width = h
        self._tail_nodes = tail
        self.cached_norm = float(tail[0])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("envelope is defined for t >= 0 only")
        re = np.interp(t, self.grid, self.values.real, left=0.0, right=0.0)
        im = np.interp(t, self.grid, self.values.imag, left=0.0, right=0.0)
        out = re + 1j * im
        return complex(out) if out.ndim == 0 else out

    def tail_integral(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("tail integral is defined for t >= 0 only")
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        cell = np.clip(np.searchsorted(self.grid, tt, side="right") - 1, 0, len(self.grid) - 2)
        u = (tt - self.grid[cell]) / self._cell_width[cell]
        u = np.clip(u, 0.0, 1.0)
        consumed = self._cell_width[cell] * u * (
            self._c0[cell] + u * (self._c1[cell] + u * self._c2[cell])
        )
        out = self._tail_nodes[cell] - consumed
        out = np.where(tt < self.grid[0], self.cached_norm, out)
        out = np.where(tt >= self.grid[-1], 0.0, out)
        return float(out[0]) if scalar else out


Envelope = GaussianEnvelope | TabulatedEnvelope


def lambda_coupling(env, t, eps: float = TAIL_EPS):
    """Source-ancilla coupling xi(t) / sqrt(tail(t)), guarded near zero.

    Returns 0 wherever xi(t) = 0 or the remaining pulse weight is below
    ``eps``; after the pulse has passed the ratio would otherwise blow up.
    Accepts scalar or array ``t``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    xi = env(t)
    tail = env.tail_integral(t)
    if np.ndim(xi) == 0:
        if xi == 0 or tail < eps:
            return 0.0 + 0.0j
        return xi / math.sqrt(tail)
    ok = (xi != 0) & (tail >= eps)
    out = np.zeros_like(xi)
    np.divide(xi, np.sqrt(np.where(ok, tail, 1.0)), out=out, where=ok)
    return out


@dataclass(frozen=True)
class GammaMatrix:
    """Coefficients of the vacuum / single-photon combination.

    ``g01`` is the coefficient of |1><0| in the source two-level state, so
    the matrix in the (ground, excited) basis is [[g00, conj(g01)],
    [g01, g11]].  Must be a valid density matrix: unit trace, positive
    semidefinite.
    """

    g00: float
    g11: float
    g01: complex = 0j

    def __post_init__(self):
        if self.g00 < 0 or self.g11 < 0:
            raise ValueError("gamma diagonal must be non-negative")
        if abs(self.g00 + self.g11 - 1.0) > 1e-12:
            raise ValueError("gamma must have unit trace (g00 + g11 = 1)")
        if self.g00 * self.g11 - abs(self.g01) ** 2 < -1e-12:
            raise ValueError("gamma must be positive semidefinite")

    @property
    def g10(self) -> complex:
        return np.conj(self.g01)

    def matrix(self) -> np.ndarray:
        """Density matrix of the source two-level system."""
        return np.array(
            [[self.g00, self.g10], [self.g01, self.g11]], dtype=complex
        )


@dataclass(frozen=True)
class PhotonComboField:
    """Vacuum / single-photon combination with profile ``xi``."""

    gamma: GammaMatrix
    xi: Envelope

    variant = "photon_combo"

    def __post_init__(self):
        if getattr(self.xi, "mode", None) == "coherent":
            raise ValueError("photon_combo requires a unit-norm envelope")
        if abs(self.xi.cached_norm - 1.0) > 1e-6:
            raise ValueError(
                f"photon envelope must be unit-norm, got {self.xi.cached_norm!r}"
            )


@dataclass(frozen=True)
class CoherentMixtureField:
    """Statistical mixture of coherent states with amplitudes ``alphas``."""

    weights: tuple
    alphas: tuple

    variant = "coherent_mixture"

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        alphas = tuple(self.alphas)
        if len(alphas) < 1:
            raise ValueError("coherent mixture needs at least one component")
        if len(weights) != len(alphas):
            raise ValueError("weights and alphas must have equal length")
        if any(w < 0 for w in weights):
            raise ValueError("weights must be non-negative")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "alphas", alphas)

    @property
    def n_components(self) -> int:
        return len(self.alphas)


FieldState = PhotonComboField | CoherentMixtureField


def photon_flux(fs: FieldState, t):
    """Mean photon arrival rate of the input field at time t."""
    if fs.variant == "photon_combo":
        return fs.gamma.g11 * np.abs(fs.xi(t)) ** 2
    return sum(w * np.abs(a(t)) ** 2 for w, a in zip(fs.weights, fs.alphas))


def envelope_intensity(fs: FieldState, t):
    """|xi(t)|^2 for a photon combination, sum_i w_i |alpha_i(t)|^2 otherwise.

    This is the "flux" column the scenario runner reports; for the photon
    variant it is the bare profile intensity, independent of gamma.
    """
    if fs.variant == "photon_combo":
        return np.abs(fs.xi(t)) ** 2
    return photon_flux(fs, t)

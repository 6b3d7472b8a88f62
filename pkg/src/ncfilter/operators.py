"""Dense complex operator algebra for small Hilbert spaces.

All operators are plain ``numpy`` arrays of shape ``(d, d)`` with complex
dtype.  Units are fixed by the decay rate (kappa = 1), so every entry is
dimensionless.  The tensor-product convention used across the whole
package is system factor first, ancilla factor second.  The two-level
basis is ordered (|0> ground, |1> excited), so the lowering operator has
its single nonzero entry in row 0, column 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITICITY_TOL = 1e-12
UNITARITY_TOL = 1e-10


def as_operator(entries) -> np.ndarray:
    """Validate and return a dense square complex matrix."""
    op = np.asarray(entries, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"operator must be square, got shape {op.shape}")
    if op.shape[0] < 1:
        raise ValueError("operator dimension must be >= 1")
    if not np.all(np.isfinite(op.view(float))):
        raise ValueError("operator entries must be finite")
    return op


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def sigma_minus() -> np.ndarray:
    """Lowering operator |0><1| in the (ground, excited) basis."""
    return np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)


def sigma_plus() -> np.ndarray:
    """Raising operator |1><0| in the (ground, excited) basis."""
    return np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """AB - BA."""
    _check_same_dim(a, b)
    return a @ b - b @ a


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """AB + BA."""
    _check_same_dim(a, b)
    return a @ b + b @ a


@dataclass(frozen=True)
class SystemModel:
    """System operators: Hamiltonian H, collapse operator L, scattering S.

    H must be Hermitian and S unitary; both are checked at construction.
    Frequently used combinations (adjoints, L^dag L, ...) are cached so the
    right-hand sides queried every integration step do not rebuild them.
    """

    H: np.ndarray
    L: np.ndarray
    S: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        H = as_operator(self.H)
        L = as_operator(self.L)
        S = as_operator(self.S)
        if not (H.shape == L.shape == S.shape):
            raise ValueError("H, L, S must share one dimension")
        if np.max(np.abs(H - dagger(H))) > HERMITICITY_TOL:
            raise ValueError("H must be Hermitian (tolerance 1e-12)")
        if np.max(np.abs(dagger(S) @ S - np.eye(H.shape[0]))) > UNITARITY_TOL:
            raise ValueError("S must be unitary (tolerance 1e-10)")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "dim", H.shape[0])
        # cached static products
        object.__setattr__(self, "Ld", dagger(L))
        object.__setattr__(self, "Sd", dagger(S))
        object.__setattr__(self, "LdL", dagger(L) @ L)
        object.__setattr__(self, "LdS", dagger(L) @ S)
        object.__setattr__(self, "SdL", dagger(S) @ L)


def two_level_decay(kappa: float = 1.0) -> SystemModel:
    """Two-level atom with L = sqrt(kappa) sigma_minus, S = I, H = 0."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return SystemModel(
        H=np.zeros((2, 2), dtype=complex),
        L=np.sqrt(kappa) * sigma_minus(),
        S=identity(2),
    )


def lindblad_apply(model: SystemModel, rho: np.ndarray) -> np.ndarray:
    """Dissipative generator: -i[H, rho] + L rho L^dag - 1/2 {L^dag L, rho}.

    Trace-annihilating for every input, Hermiticity-preserving for
    Hermitian input.  ``rho`` may carry leading batch dimensions.
    """
    if rho.shape[-2:] != (model.dim, model.dim):
        raise ValueError(
            f"dimension mismatch: state {rho.shape[-2:]} vs model dim {model.dim}"
        )
    H, L, Ld, LdL = model.H, model.L, model.Ld, model.LdL
    return (
        -1j * (H @ rho - rho @ H)
        + L @ rho @ Ld
        - 0.5 * (LdL @ rho + rho @ LdL)
    )


def adjoint_lindblad_apply(model: SystemModel, x: np.ndarray) -> np.ndarray:
    """Heisenberg-picture generator: i[H, X] + L^dag X L - 1/2 {L^dag L, X}."""
    if x.shape[-2:] != (model.dim, model.dim):
        raise ValueError(
            f"dimension mismatch: observable {x.shape[-2:]} vs model dim {model.dim}"
        )
    H, L, Ld, LdL = model.H, model.L, model.Ld, model.LdL
    return (
        1j * (H @ x - x @ H)
        + Ld @ x @ L
        - 0.5 * (LdL @ x + x @ LdL)
    )


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tensor product, first factor varying slowest (system (x) ancilla)."""
    return np.kron(as_operator(a), as_operator(b))


def partial_trace_ancilla(rho_ext: np.ndarray, sys_dim: int) -> np.ndarray:
    """Trace out a two-level ancilla from a (sys_dim*2) x (sys_dim*2) matrix."""
    rho_ext = np.asarray(rho_ext, dtype=complex)
    d = rho_ext.shape[-1]
    if rho_ext.shape[-2] != d or d != 2 * sys_dim:
        raise ValueError(
            f"extended dimension {rho_ext.shape[-2:]} does not factor as {sys_dim} x 2"
        )
    blocks = rho_ext.reshape(rho_ext.shape[:-2] + (sys_dim, 2, sys_dim, 2))
    return np.einsum("...iaja->...ij", blocks)


def ancilla_sandwich(
    rho_ext: np.ndarray, a_left: np.ndarray, a_right: np.ndarray
) -> np.ndarray:
    """Tr_A[(I (x) a_left) rho_ext (I (x) a_right)] for a two-level ancilla."""
    rho_ext = np.asarray(rho_ext, dtype=complex)
    d = rho_ext.shape[-1]
    if d % 2 != 0 or rho_ext.shape[-2] != d:
        raise ValueError("extended dimension must be even and square")
    a_left = as_operator(a_left)
    a_right = as_operator(a_right)
    if a_left.shape != (2, 2) or a_right.shape != (2, 2):
        raise ValueError("ancilla operators must be 2x2")
    sys_dim = d // 2
    blocks = rho_ext.reshape(rho_ext.shape[:-2] + (sys_dim, 2, sys_dim, 2))
    # Tr_A[(I(x)A) rho (I(x)B)] = sum_{a,b,c} A_{ab} rho^{(b.)(c.)} B_{ca}
    return np.einsum("ab,...ibjc,ca->...ij", a_left, blocks, a_right)


# ---------------------------------------------------------------------------
# Superoperator (vectorized) representations.
#
# Row-major vectorization: vec(rho)[i*d + j] = rho[i, j].  A map
# rho -> A rho B then acts as the matrix kron(A, B.T) on vec(rho).  These
# builders back the compiled generators used by the integrators and the
# trajectory engine.
# ---------------------------------------------------------------------------


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(rho.shape[:-2] + (-1,))


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v, dtype=complex).reshape(v.shape[:-1] + (dim, dim))


def sop_sandwich(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of rho -> a rho b on vec(rho)."""
    return np.kron(a, b.T)


def sop_left(a: np.ndarray) -> np.ndarray:
    """Matrix of rho -> a rho."""
    return np.kron(a, np.eye(a.shape[0], dtype=complex))


def sop_right(b: np.ndarray) -> np.ndarray:
    """Matrix of rho -> rho b."""
    return np.kron(np.eye(b.shape[0], dtype=complex), b.T)


def sop_lindblad(model: SystemModel) -> np.ndarray:
    """Matrix of the dissipative generator on vec(rho)."""
    H, L, Ld, LdL = model.H, model.L, model.Ld, model.LdL
    return (
        -1j * (sop_left(H) - sop_right(H))
        + sop_sandwich(L, Ld)
        - 0.5 * (sop_left(LdL) + sop_right(LdL))
    )


def trace_dual(x: np.ndarray) -> np.ndarray:
    """Dual vector w with vec(rho) . w = Tr(x rho)."""
    return np.asarray(x, dtype=complex).T.reshape(-1)

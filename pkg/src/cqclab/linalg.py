"""Dense complex linear algebra for small Hilbert spaces.

States, Hermitian operators and density matrices are thin validated wrappers
around numpy arrays.  Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

HERMITIAN_TOL = 1e-12
NORMALIZED_TOL = 1e-12
PSD_FLOOR = -1e-10
# exp(zM) is refused beyond this norm: exp(700) is already near float64 overflow.
EXPM_NORM_LIMIT = 700.0


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericalError(ArithmeticError):
    """Raised when a computation would overflow or fails to converge."""


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    return a


def hermiticity_defect(m: np.ndarray) -> float:
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(m - m.conj().T)))


@dataclass(frozen=True)
class StateVector:
    """Complex amplitudes over a finite basis; possibly unnormalized."""

    amplitudes: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size == 0:
            raise ValidationError("state vector must have at least one amplitude")
        if not np.all(np.isfinite(amps)):
            raise ValidationError("state amplitudes must be finite")
        object.__setattr__(self, "amplitudes", amps)
        if self.normalized and abs(self.norm2 - 1.0) >= NORMALIZED_TOL:
            raise ValidationError(f"state flagged normalized but |psi|^2 = {self.norm2!r}")

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalize(self) -> "StateVector":
        n2 = self.norm2
        if n2 <= 0.0:
            raise ValidationError("cannot normalize a zero vector")
        amps = self.amplitudes / np.sqrt(n2)
        # re-normalize once more so the flag check holds to rounding
        amps = amps / np.sqrt(np.vdot(amps, amps).real)
        return StateVector(amps, normalized=True)

    @classmethod
    def from_amplitudes(cls, amps, normalize: bool = True) -> "StateVector":
        s = cls(np.asarray(amps, dtype=complex))
        return s.normalize() if normalize else s


@dataclass(frozen=True)
class HermitianOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.matrix)
        if not np.all(np.isfinite(m)):
            raise ValidationError("operator entries must be finite")
        defect = hermiticity_defect(m)
        scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
        if defect >= HERMITIAN_TOL * scale:
            raise ValidationError(f"operator is not Hermitian (max |M - M^dag| = {defect:.3e})")
        # symmetrize away the rounding-level defect
        object.__setattr__(self, "matrix", 0.5 * (m + m.conj().T))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def diagonal(cls, values) -> "HermitianOperator":
        return cls(np.diag(np.asarray(values, dtype=float)).astype(complex))

    @classmethod
    def zeros(cls, dim: int) -> "HermitianOperator":
        return cls(np.zeros((dim, dim), dtype=complex))


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray
    trace: float = field(default=float("nan"))
    stderr: np.ndarray | None = None

    def __post_init__(self):
        m = _as_matrix(self.matrix)
        defect = hermiticity_defect(m)
        if defect >= 1e-12 * max(1.0, float(np.max(np.abs(m)))):
            raise ValidationError(f"density matrix is not Hermitian (defect {defect:.3e})")
        m = 0.5 * (m + m.conj().T)
        tr = float(np.trace(m).real)
        if np.isnan(self.trace):
            object.__setattr__(self, "trace", tr)
        elif abs(self.trace - tr) >= 1e-12:
            raise ValidationError(f"recorded trace {self.trace} != matrix trace {tr}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def is_positive(self, floor: float = PSD_FLOOR) -> bool:
        return self.min_eigenvalue() >= floor

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)

    @classmethod
    def pure(cls, state: StateVector | np.ndarray) -> "DensityMatrix":
        v = state.amplitudes if isinstance(state, StateVector) else np.asarray(state, dtype=complex)
        return cls(np.outer(v, v.conj()))


def pauli() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    return sx, sy, sz


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    x = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * 0.5 * (x + x.conj().T) / np.sqrt(dim)


def _matrix_of(op) -> np.ndarray:
    if isinstance(op, HermitianOperator):
        return op.matrix
    return HermitianOperator(op).matrix


def eig_hermitian(h) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and a unitary matrix of eigenvectors.

    Raises ValidationError for non-Hermitian input.
    """
    m = _matrix_of(h)
    vals, vecs = np.linalg.eigh(m)
    return vals, vecs


def expm_scaled(m, z: complex = 1.0) -> np.ndarray:
    """exp(z*M) for a general complex matrix.

    Hermitian M with real or imaginary z goes through the eigen route; anything
    else (e.g. the non-normal generator iH + (lam/2)A^2) uses scipy's
    scaling-and-squaring Pade.  Refuses when the growth of exp(zM) could overflow.
    """
    a = _as_matrix(m)
    if not np.all(np.isfinite(a)) or not np.isfinite(z):
        raise ValidationError("expm_scaled needs finite inputs")
    zc = complex(z)
    zm = zc * a
    if zc == 0:
        return np.eye(a.shape[0], dtype=complex)
    if hermiticity_defect(a) < HERMITIAN_TOL * max(1.0, float(np.max(np.abs(a)))) and (zc.real == 0 or zc.imag == 0):
        vals, vecs = np.linalg.eigh(0.5 * (a + a.conj().T))
        # only Re(z) can grow the result; unitary propagation is always safe
        if vals.size and abs(zc.real) * np.max(np.abs(vals)) > EXPM_NORM_LIMIT:
            raise NumericalError(f"|Re z| ||M|| exceeds {EXPM_NORM_LIMIT}; exp(zM) would overflow")
        return (vecs * np.exp(zc * vals)) @ vecs.conj().T
    if zm.size and np.linalg.norm(zm, 2) > EXPM_NORM_LIMIT:
        raise NumericalError(f"||zM|| = {np.linalg.norm(zm, 2):.3g} exceeds {EXPM_NORM_LIMIT}; exp(zM) would overflow")
    return scipy.linalg.expm(zm)


def heisenberg_op(a, h, t: float) -> HermitianOperator:
    """e^{iHt} A e^{-iHt}."""
    am = _matrix_of(a)
    hm = _matrix_of(h)
    if am.shape != hm.shape:
        raise ValidationError(f"dimension mismatch: A {am.shape} vs H {hm.shape}")
    vals, vecs = np.linalg.eigh(hm)
    u = (vecs * np.exp(1j * t * vals)) @ vecs.conj().T
    out = u @ am @ u.conj().T
    return HermitianOperator(0.5 * (out + out.conj().T))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def left_right_apply(left: np.ndarray, rho: np.ndarray, right: np.ndarray) -> np.ndarray:
    """L rho R, the left/right superoperator action."""
    return left @ rho @ right

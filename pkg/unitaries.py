import json
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from scipy.linalg import polar, qr

from config import get_settings
from errors import ConvergenceError, InvalidDimensionError, NonUnitaryError, NormalizationError, ParseError

TWO_PI = 2.0 * math.pi


class ComplexMatrix(BaseModel):
    """JSON carrier of a dense complex matrix: row-major ``[re, im]`` pairs."""

    model_config = ConfigDict(frozen=True)

    rows: int = Field(ge=1)
    cols: int = Field(ge=1)
    entries: list[tuple[float, float]]

    @model_validator(mode="after")
    def _check_entries(self):
        if len(self.entries) != self.rows * self.cols:
            raise ValueError(f"expected {self.rows * self.cols} entries, got {len(self.entries)}")
        if not all(math.isfinite(re) and math.isfinite(im) for re, im in self.entries):
            raise ValueError("entries must be finite")
        return self

    @classmethod
    def from_array(cls, a) -> "ComplexMatrix":
        a = np.asarray(a, dtype=np.complex128)
        if a.ndim != 2:
            raise InvalidDimensionError(f"expected a 2-d matrix, got shape {a.shape}")
        flat = a.reshape(-1)
        return cls(rows=a.shape[0], cols=a.shape[1], entries=[(float(z.real), float(z.imag)) for z in flat])

    def to_array(self) -> np.ndarray:
        flat = np.array([complex(re, im) for re, im in self.entries], dtype=np.complex128)
        return flat.reshape(self.rows, self.cols)


class GaugePhases(BaseModel):
    """Input and output phase screens, each angle wrapped into [0, 2pi)."""

    model_config = ConfigDict(frozen=True)

    input_phases: tuple[float, ...]
    output_phases: tuple[float, ...]

    @field_validator("input_phases", "output_phases")
    @classmethod
    def _wrap(cls, phases):
        wrapped = []
        for phi in phases:
            if not math.isfinite(phi):
                raise ValueError("phases must be finite")
            w = math.fmod(phi, TWO_PI)
            if w < 0:
                w += TWO_PI
            # fmod can land exactly on 2pi after the shift
            wrapped.append(0.0 if w >= TWO_PI else w)
        return tuple(wrapped)

    @model_validator(mode="after")
    def _same_length(self):
        if len(self.input_phases) != len(self.output_phases):
            raise ValueError("input and output phase screens differ in length")
        return self

    @property
    def mode_count(self) -> int:
        return len(self.input_phases)

    @classmethod
    def identity(cls, m: int) -> "GaugePhases":
        return cls(input_phases=(0.0,) * m, output_phases=(0.0,) * m)

    @classmethod
    def random(cls, m: int, seed=None) -> "GaugePhases":
        rng = np.random.default_rng(seed)
        phases = rng.uniform(0.0, TWO_PI, size=2 * m)
        return cls(input_phases=tuple(phases[:m]), output_phases=tuple(phases[m:]))


def as_square(u) -> np.ndarray:
    """Coerce to a finite square complex128 array."""
    a = np.asarray(u, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise InvalidDimensionError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidDimensionError("matrix has non-finite entries")
    return a


def unitarity_residual(u) -> float:
    a = as_square(u)
    return float(np.max(np.abs(a.conj().T @ a - np.eye(a.shape[0]))))


def check_unitary(u, tol: float | None = None) -> np.ndarray:
    """Return ``u`` as an array, raising NonUnitaryError when max|U^dag U - I| exceeds tol."""
    tol = get_settings().unitarity_tol if tol is None else tol
    a = as_square(u)
    residual = unitarity_residual(a)
    if residual > tol:
        raise NonUnitaryError(residual, tol)
    return a


def repair_unitary(u) -> np.ndarray:
    """Nearest unitary in Frobenius norm (unitary factor of the polar decomposition).

    Printed matrices carry three decimals and fail strict unitarity; this is the
    projection applied before they are used as unitaries.
    """
    unitary, _ = polar(as_square(u))
    return unitary


def haar_sample(m: int, seed=None) -> np.ndarray:
    """Draw an m x m unitary from the Haar measure.

    Args:
        m: Number of modes
        seed: Integer seed, a numpy Generator, or None for fresh entropy

    Returns:
        Haar-random unitary as a complex128 array
    """
    if m < 1:
        raise InvalidDimensionError(f"mode count must be at least 1, got {m}")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / np.sqrt(2.0)
    q, r = qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise InvalidDimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")


def gate_fidelity(a, b) -> float:
    """|Tr(a b^dag)| / m."""
    a = as_square(a)
    b = as_square(b)
    _same_shape(a, b)
    return float(abs(np.trace(a @ b.conj().T)) / a.shape[0])


def _check_distribution(p: np.ndarray, name: str, tol: float) -> None:
    if not np.all(np.isfinite(p)):
        raise NormalizationError(f"{name} has non-finite entries")
    if np.any(p < 0):
        raise NormalizationError(f"{name} has negative entries")
    total = float(p.sum())
    if abs(total - 1.0) > tol:
        raise NormalizationError(f"{name} sums to {total:.9f}, not 1")


def similarity(p, q, tol: float = 1e-6) -> float:
    """Similarity (sum_i sqrt(p_i q_i))^2 of two probability vectors."""
    p = np.asarray(p, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    if p.shape != q.shape:
        raise InvalidDimensionError(f"distributions differ in length: {p.size} vs {q.size}")
    _check_distribution(p, "p", tol)
    _check_distribution(q, "q", tol)
    s = float(np.sum(np.sqrt(p * q)) ** 2)
    return min(max(s, 0.0), 1.0)


def matrix_similarity(p, q, tol: float = 1e-6) -> float:
    """Mean similarity of matching columns; column i is the output distribution of input i."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 2:
        raise InvalidDimensionError(f"probability matrices differ in shape: {p.shape} vs {q.shape}")
    return float(np.mean([similarity(p[:, i], q[:, i], tol) for i in range(p.shape[1])]))


def apply_gauge(u, g: GaugePhases) -> np.ndarray:
    """D(output_phases) . U . D(input_phases)."""
    a = as_square(u)
    if g.mode_count != a.shape[0]:
        raise InvalidDimensionError(f"gauge has {g.mode_count} modes, matrix has {a.shape[0]}")
    out = np.exp(1j * np.asarray(g.output_phases))
    inp = np.exp(1j * np.asarray(g.input_phases))
    return out[:, None] * a * inp[None, :]


def _alternate(w: np.ndarray, b: np.ndarray, max_iter: int, tol: float):
    m = w.shape[0]
    previous = -1.0
    for _ in range(max_iter):
        a = np.exp(-1j * np.angle(w @ b))
        b = np.exp(-1j * np.angle(a @ w))
        value = float(abs(a @ w @ b)) / m
        if abs(value - previous) <= tol:
            return a, b, value
        previous = value
    raise ConvergenceError(f"gauge alignment did not converge in {max_iter} iterations")


def align_gauge(u, ref, max_iter: int = 1000, tol: float = 1e-12) -> tuple[np.ndarray, GaugePhases]:
    """Gauge-equivalent copy of ``u`` with the highest gate fidelity to ``ref``.

    Alternates closed-form per-row and per-column phase updates until the fidelity
    changes by less than ``tol``, then rotates the global phase so that entry (1, 1)
    is real and non-negative.

    Args:
        u: Matrix to align
        ref: Reference matrix of the same dimension
        max_iter: Iteration cap of the alternating updates
        tol: Convergence threshold on the fidelity change

    Returns:
        Tuple of the aligned matrix and the GaugePhases mapping ``u`` onto it
    """
    a_u = as_square(u)
    a_ref = as_square(ref)
    _same_shape(a_u, a_ref)
    w = a_u * a_ref.conj()

    m = a_u.shape[0]
    k0 = int(np.argmax(np.abs(w).sum(axis=1)))
    starts = [np.ones(m, dtype=np.complex128), np.exp(-1j * np.angle(w[k0]))]
    best = max((_alternate(w, b, max_iter, tol) for b in starts), key=lambda item: item[2])
    rows, cols, _ = best

    aligned = rows[:, None] * a_u * cols[None, :]
    global_phase = -np.angle(aligned[0, 0]) if abs(aligned[0, 0]) > 0 else 0.0
    aligned = aligned * np.exp(1j * global_phase)
    gauge = GaugePhases(
        input_phases=tuple(np.angle(cols)),
        output_phases=tuple(np.angle(rows) + global_phase),
    )
    return aligned, gauge


def align_gauge_or_conjugate(u, ref, max_iter: int = 1000, tol: float = 1e-12):
    """Like align_gauge, also trying the complex conjugate of ``u``.

    U and its conjugate produce identical photon statistics, so data alone cannot
    tell them apart.

    Returns:
        Tuple (aligned matrix, gauge, conjugated flag)
    """
    a_u = as_square(u)
    plain, g_plain = align_gauge(a_u, ref, max_iter, tol)
    conj, g_conj = align_gauge(a_u.conj(), ref, max_iter, tol)
    if gate_fidelity(conj, ref) > gate_fidelity(plain, ref):
        return conj, g_conj, True
    return plain, g_plain, False


def load_matrix(path) -> np.ndarray:
    """Read a matrix JSON file.

    Accepts a bare matrix object or a document holding it under ``unitary`` or ``matrix``.
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, str(path), e.lineno) from e
    except OSError as e:
        raise ParseError(str(e), str(path)) from e
    if isinstance(document, dict):
        for key in ("unitary", "matrix"):
            if isinstance(document.get(key), dict):
                document = document[key]
                break
    try:
        return ComplexMatrix.model_validate(document).to_array()
    except ValidationError as e:
        raise ParseError(f"not a matrix document: {e.errors()[0]['msg']}", str(path)) from e


def save_matrix(a, path, manifest: dict | None = None) -> None:
    document = ComplexMatrix.from_array(a).model_dump()
    if manifest is not None:
        document["manifest"] = manifest
    Path(path).write_text(json.dumps(document, indent=2) + "\n")

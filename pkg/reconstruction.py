"""Unitary reconstruction from single-photon probabilities and two-photon visibilities.

Each choice of a reference input i0 and output K0 fixes the gauge (row K0 and column
i0 real) and gives a closed-form candidate: moduli from the single-photon data, phases
from the visibilities of the experiments with inputs {i0, i} and outputs {K0, K}. The
candidates are projected onto the unitaries, ranked by chi^2, and the best one is
refined over the mesh coordinates.
"""

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from itertools import product
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.optimize import brentq, least_squares

from boson_sampler import (
    VISIBILITY_FLOOR,
    VisibilityEntry,
    VisibilityTensor,
    mode_pairs,
    two_photon_distribution,
)
from config import get_settings
from decomposition import mesh_coordinates, mesh_unitary
from errors import (
    ConvergenceError,
    IllConditionedReferenceError,
    InvalidDimensionError,
    ParseError,
    ReconstructionWarning,
    UnsupportedInputError,
)
from unitaries import (
    ComplexMatrix,
    GaugePhases,
    align_gauge_or_conjugate,
    as_square,
    check_unitary,
    matrix_similarity,
    repair_unitary,
    similarity,
    unitarity_residual,
)

SWEEP_STEPS = (0.05, 0.01, 0.002)

# |cos| beyond 1 + _CLIP_WARN is clipped with a warning, beyond 1 + _CLIP_ERROR the reference is rejected
_CLIP_WARN = 0.05
_CLIP_ERROR = 0.2
# products of moduli below this leave the phase undetermined
_TINY = 1e-15


class NoiseModel(BaseModel):
    """How synthetic measurements deviate from the ideal model.

    ``fabrication_sigma`` perturbs the mesh coordinates of the unitary before anything is
    measured; ``kind`` then adds measurement noise: multiplicative Gaussian of
    ``relative_sigma`` on every probability, or counting statistics with ``shots`` events
    per setting.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["none", "gaussian", "poisson"] = "none"
    relative_sigma: float = Field(0.0, ge=0.0)
    shots: int | None = Field(None, ge=1)
    fabrication_sigma: float = Field(0.0, ge=0.0)

    @model_validator(mode="after")
    def _complete(self):
        if self.kind == "poisson" and self.shots is None:
            raise ValueError("poisson noise needs a number of shots per setting")
        return self


class CoincidenceRecord(BaseModel):
    """Collision-free coincidence distribution of the pair injected in inputs i, j (1-based)."""

    model_config = ConfigDict(frozen=True)

    i: int = Field(ge=1)
    j: int = Field(ge=1)
    probabilities: list[float]


class MeasurementData(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: int = Field(ge=2)
    q: float = Field(ge=0.0, le=1.0)
    # entry i*m + K holds (P1(i, K), sigma)
    single_photon: list[tuple[float, float]]
    visibilities: VisibilityTensor
    coincidences: list[CoincidenceRecord] = []

    @model_validator(mode="after")
    def _check(self):
        if len(self.single_photon) != self.m * self.m:
            raise ValueError(f"single_photon needs {self.m * self.m} entries, got {len(self.single_photon)}")
        if any(p < 0 or not math.isfinite(p) for p, _ in self.single_photon):
            raise ValueError("single-photon probabilities must be finite and non-negative")
        if any(not s > 0 for _, s in self.single_photon):
            raise ValueError("single-photon uncertainties must be positive")
        if self.visibilities.mode_count != self.m:
            raise ValueError(f"visibility tensor has {self.visibilities.mode_count} modes, data has {self.m}")
        if any(e.sigma is not None and not e.sigma > 0 for e in self.visibilities.entries):
            raise ValueError("visibility uncertainties must be positive")
        p, sigma = self.single_photon_arrays()
        slack = np.maximum(5.0 * np.sqrt((sigma**2).sum(axis=1)), 1e-6)
        off = np.abs(p.sum(axis=1) - 1.0)
        if np.any(off > slack):
            worst = int(np.argmax(off - slack))
            raise ValueError(f"single-photon probabilities of input {worst + 1} sum to {p[worst].sum():.6f}")
        pair_count = self.m * (self.m - 1) // 2
        for c in self.coincidences:
            if not (c.i <= self.m and c.j <= self.m and c.i != c.j):
                raise ValueError(f"coincidence record for inputs ({c.i}, {c.j}) outside {self.m} modes")
            if len(c.probabilities) != pair_count:
                raise ValueError(f"coincidence record ({c.i}, {c.j}) needs {pair_count} probabilities")
        return self

    def single_photon_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(P1, sigma) as m x m arrays indexed [input, output]."""
        a = np.asarray(self.single_photon, dtype=float).reshape(self.m, self.m, 2)
        return a[:, :, 0], a[:, :, 1]

    def to_json_dict(self) -> dict:
        return {
            "m": self.m,
            "q": self.q,
            "single_photon": [[p, s] for p, s in self.single_photon],
            "visibilities": self.visibilities.to_records(),
            "coincidences": [c.model_dump() for c in self.coincidences],
        }

    @classmethod
    def from_json_dict(cls, document: dict) -> "MeasurementData":
        m = int(document["m"])
        return cls(
            m=m,
            q=document["q"],
            single_photon=[tuple(entry) for entry in document["single_photon"]],
            visibilities=VisibilityTensor.from_records(m, document.get("visibilities", [])),
            coincidences=document.get("coincidences", []),
        )


def load_measurements(path) -> MeasurementData:
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, str(path), e.lineno) from e
    except OSError as e:
        raise ParseError(str(e), str(path)) from e
    try:
        return MeasurementData.from_json_dict(document)
    except (KeyError, TypeError) as e:
        raise ParseError(f"missing or malformed field {e}", str(path)) from e
    except ValidationError as e:
        raise ParseError(f"invalid measurement data: {e.errors()[0]['msg']}", str(path)) from e


def save_measurements(data: MeasurementData, path, manifest: dict | None = None) -> None:
    document = data.to_json_dict()
    if manifest is not None:
        document["manifest"] = manifest
    Path(path).write_text(json.dumps(document, indent=2) + "\n")


class _Observations:
    """Measurement data flattened into the arrays chi^2 works on."""

    def __init__(self, data: MeasurementData):
        self.m = data.m
        self.q = data.q
        self.p, self.p_sigma = data.single_photon_arrays()
        entries = data.visibilities.entries
        self.I = np.array([e.i for e in entries], dtype=int)
        self.J = np.array([e.j for e in entries], dtype=int)
        self.K = np.array([e.K for e in entries], dtype=int)
        self.L = np.array([e.L for e in entries], dtype=int)
        self.v = np.array([e.v for e in entries], dtype=float)
        self.v_sigma = np.array([1.0 if e.sigma is None else e.sigma for e in entries], dtype=float)

    def subset(self, mask: np.ndarray) -> tuple[np.ndarray, ...]:
        return self.I[mask], self.J[mask], self.K[mask], self.L[mask], self.v[mask], self.v_sigma[mask]


def _pair_probabilities(u: np.ndarray, I, J, K, L) -> tuple[np.ndarray, np.ndarray]:
    direct = u[K, I] * u[L, J]
    exchange = u[K, J] * u[L, I]
    p_quantum = np.abs(direct + exchange) ** 2
    p_classical = np.abs(direct) ** 2 + np.abs(exchange) ** 2
    return p_quantum, p_classical


def _model_visibilities(u: np.ndarray, I, J, K, L, q: float) -> np.ndarray:
    p_quantum, p_classical = _pair_probabilities(u, I, J, K, L)
    v = np.zeros_like(p_classical)
    np.divide(p_classical - p_quantum, p_classical, out=v, where=p_classical >= VISIBILITY_FLOOR)
    return q * v


def _residuals(u: np.ndarray, obs: _Observations) -> np.ndarray:
    single = (np.abs(u.T) ** 2 - obs.p) / obs.p_sigma
    two = (_model_visibilities(u, obs.I, obs.J, obs.K, obs.L, obs.q) - obs.v) / obs.v_sigma
    return np.concatenate([single.ravel(), two])


def chi2(u, data: MeasurementData) -> float:
    """Weighted squared deviation of the model predictions of ``u`` from ``data``.

    Sums all m^2 single-photon terms and every visibility present in the data; model
    visibilities carry the indistinguishability q of the data.
    """
    u = as_square(u)
    if u.shape[0] != data.m:
        raise InvalidDimensionError(f"{u.shape[0]}-mode matrix against {data.m}-mode data")
    return float(np.sum(_residuals(u, _Observations(data)) ** 2))


def _score(u: np.ndarray, obs: _Observations, mask: np.ndarray | None = None) -> float:
    I, J, K, L, v, sigma = obs.subset(mask) if mask is not None else (obs.I, obs.J, obs.K, obs.L, obs.v, obs.v_sigma)
    if I.size == 0:
        return 0.0
    return float(np.sum(((_model_visibilities(u, I, J, K, L, obs.q) - v) / sigma) ** 2))


def _cosine(v_obs: float, q: float, a: float, b: float, where: str) -> float:
    c = -(v_obs / q) * (a * a + b * b) / (2.0 * a * b)
    excess = abs(c) - 1.0
    if excess > _CLIP_ERROR:
        raise IllConditionedReferenceError(f"{where}: phase cosine {c:.3f} is inconsistent with the moduli")
    if excess > _CLIP_WARN:
        warnings.warn(f"{where}: phase cosine {c:.3f} clipped to [-1, 1]", ReconstructionWarning, stacklevel=3)
    return min(max(c, -1.0), 1.0)


def reconstruct_candidate(data: MeasurementData, i0: int, k0: int, threshold: float | None = None) -> np.ndarray:
    """Closed-form reconstruction for reference input ``i0`` and output ``k0`` (0-based).

    Args:
        data: Single-photon probabilities and visibilities
        i0: Reference input mode; column i0 is made real
        k0: Reference output mode; row k0 is made real
        threshold: Smallest accepted reference probability; configured default when None

    Returns:
        Candidate matrix, in general not exactly unitary

    Raises:
        IllConditionedReferenceError: when a reference probability is at or below the
            threshold or the visibilities contradict the moduli
    """
    obs = _Observations(data)
    m = obs.m
    if not (0 <= i0 < m and 0 <= k0 < m):
        raise InvalidDimensionError(f"reference ({i0}, {k0}) outside {m} modes")
    if obs.q <= 0:
        raise UnsupportedInputError("phases cannot be recovered from fully distinguishable photons (q = 0)")
    threshold = get_settings().reference_threshold if threshold is None else threshold
    ref_min = min(obs.p[i0, :].min(), obs.p[:, k0].min())
    if ref_min <= threshold:
        raise IllConditionedReferenceError(
            f"reference (input {i0 + 1}, output {k0 + 1}) has probability {ref_min:.3e} <= {threshold:.1e}"
        )

    mod = np.sqrt(np.clip(obs.p.T, 0.0, None))
    visibilities = data.visibilities.as_dict()
    theta = np.zeros((m, m))
    for k in range(m):
        for i in range(m):
            if k == k0 or i == i0:
                continue
            a = mod[k0, i0] * mod[k, i]
            b = mod[k0, i] * mod[k, i0]
            key = (min(i0, i), max(i0, i), min(k0, k), max(k0, k))
            if key not in visibilities or a * b < _TINY:
                theta[k, i] = 0.5 * math.pi
                continue
            where = f"reference ({i0 + 1}, {k0 + 1}), entry ({k + 1}, {i + 1})"
            theta[k, i] = math.acos(_cosine(visibilities[key], obs.q, a, b, where))

    free_inputs = [i for i in range(m) if i != i0]
    free_rows = [k for k in range(m) if k != k0]
    u = mod.astype(np.complex128)

    # signs within a row: the row's own experiments that avoid input i0
    for k in free_rows:
        held_out = (obs.I != i0) & (obs.J != i0) & (np.minimum(obs.K, obs.L) == min(k0, k)) & (
            np.maximum(obs.K, obs.L) == max(k0, k)
        )
        best_row, best = None, math.inf
        for pattern in product((1.0, -1.0), repeat=len(free_inputs) - 1):
            signs = np.ones(m)
            signs[free_inputs[1:]] = pattern
            u[k] = mod[k] * np.exp(1j * signs * theta[k])
            score = _score(u, obs, held_out)
            if score < best:
                best_row, best = u[k].copy(), score
        u[k] = best_row

    # relative orientation of the rows; flipping every row is complex conjugation
    base = u.copy()
    best_u, best = base, math.inf
    for pattern in product((False, True), repeat=max(len(free_rows) - 1, 0)):
        trial = base.copy()
        for k, flip in zip(free_rows[1:], pattern):
            if flip:
                trial[k] = trial[k].conj()
        score = _score(trial, obs)
        if score < best:
            best_u, best = trial, score
    return best_u


class RefinementTrace(BaseModel):
    model_config = ConfigDict(frozen=True)

    start_chi2: float
    sweep_chi2: float
    final_chi2: float
    evaluations: int
    least_squares_accepted: bool
    message: str = ""


class CandidateScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    input: int
    output: int
    chi2: float | None = None
    skipped: str | None = None


class ReconstructionResult(BaseModel):
    """Reconstructed unitary with its selection and refinement record; modes are 1-based."""

    model_config = ConfigDict(frozen=True)

    unitary: ComplexMatrix
    chi2: float = Field(ge=0.0)
    reference_choice: tuple[int, int]
    refinement: RefinementTrace
    gauge: GaugePhases
    conjugated: bool = False
    candidates: list[CandidateScore] = []

    @model_validator(mode="after")
    def _unitary(self):
        residual = unitarity_residual(self.unitary.to_array())
        if residual > 1e-9:
            raise ValueError(f"reconstructed matrix is not unitary (residual {residual:.2e})")
        return self

    def matrix(self) -> np.ndarray:
        return self.unitary.to_array()

    @property
    def skipped(self) -> list[CandidateScore]:
        return [c for c in self.candidates if c.skipped is not None]

    def to_json_dict(self) -> dict:
        document = self.model_dump(mode="json")
        document["reference_choice"] = {"input": self.reference_choice[0], "output": self.reference_choice[1]}
        return document


def refine_unitary(u, data: MeasurementData, steps=SWEEP_STEPS, max_passes: int = 3) -> tuple[np.ndarray, RefinementTrace]:
    """Lower chi^2 over the mesh coordinates of ``u``.

    A coordinate-wise sweep at each step size, then a finite-difference least-squares
    run; the least-squares point is kept only if it does not raise chi^2.
    """
    u = check_unitary(u)
    obs = _Observations(data)
    m = u.shape[0]
    thetas, deltas = mesh_coordinates(u)
    n = thetas.size
    evaluations = 0

    def residuals(x):
        return _residuals(mesh_unitary(m, x[:n], x[n:]), obs)

    def objective(x):
        nonlocal evaluations
        evaluations += 1
        return float(np.sum(residuals(x) ** 2))

    x = np.concatenate([thetas, deltas])
    start = objective(x)
    best = start
    for step in steps:
        for _ in range(max_passes):
            improved = False
            for c in range(x.size):
                for direction in (1.0, -1.0):
                    trial = x.copy()
                    trial[c] += direction * step
                    value = objective(trial)
                    if value < best:
                        x, best, improved = trial, value, True
                        break
            if not improved:
                break
    swept = best

    fit = least_squares(residuals, x, method="trf", ftol=1e-10, xtol=1e-12, gtol=1e-12, max_nfev=2000)
    evaluations += fit.nfev
    final = float(np.sum(fit.fun**2))
    accepted = final <= best
    if accepted:
        x, best = fit.x, final
    trace = RefinementTrace(
        start_chi2=start,
        sweep_chi2=swept,
        final_chi2=best,
        evaluations=evaluations,
        least_squares_accepted=accepted,
        message=str(fit.message),
    )
    return mesh_unitary(m, x[:n], x[n:]), trace


def _evaluate_choice(data: MeasurementData, i0: int, k0: int, threshold: float | None):
    try:
        candidate = reconstruct_candidate(data, i0, k0, threshold)
    except IllConditionedReferenceError as e:
        return None, CandidateScore(input=i0 + 1, output=k0 + 1, skipped=str(e))
    u = repair_unitary(candidate)
    return u, CandidateScore(input=i0 + 1, output=k0 + 1, chi2=chi2(u, data))


def reconstruct_best(
    data: MeasurementData,
    reference=None,
    workers: int | None = None,
    refine: bool = True,
    threshold: float | None = None,
) -> ReconstructionResult:
    """Reconstruct the unitary from all m^2 reference choices and keep the best.

    Args:
        data: Measurement data
        reference: Matrix to align the result to (gauge and complex conjugation); when
            None only the global phase is fixed
        workers: Threads for the candidate reconstructions; configured default when None
        refine: Run refine_unitary on the selected candidate
        threshold: Smallest accepted reference probability

    Returns:
        ReconstructionResult with entry (1, 1) real and non-negative

    Raises:
        IllConditionedReferenceError: when no reference choice is usable
    """
    m = data.m
    workers = get_settings().workers if workers is None else workers
    choices = [(i0, k0) for k0 in range(m) for i0 in range(m)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(lambda choice: _evaluate_choice(data, *choice, threshold), choices))

    scored = [(score.chi2, u, score) for u, score in outcomes if u is not None]
    if not scored:
        raise IllConditionedReferenceError(f"all {len(choices)} reference choices are ill-conditioned")
    best_chi2, best_u, best_score = min(scored, key=lambda item: item[0])

    if refine:
        u, trace = refine_unitary(best_u, data)
    else:
        u = best_u
        trace = RefinementTrace(
            start_chi2=best_chi2, sweep_chi2=best_chi2, final_chi2=best_chi2, evaluations=0,
            least_squares_accepted=False, message="refinement skipped",
        )

    if reference is not None:
        ref = as_square(reference)
        if ref.shape[0] != m:
            raise InvalidDimensionError(f"{ref.shape[0]}-mode reference for {m}-mode data")
        aligned, gauge, conjugated = align_gauge_or_conjugate(u, ref)
    else:
        phase = -float(np.angle(u[0, 0])) if abs(u[0, 0]) > 0 else 0.0
        aligned = u * np.exp(1j * phase)
        gauge = GaugePhases(input_phases=(0.0,) * m, output_phases=(phase,) * m)
        conjugated = False

    return ReconstructionResult(
        unitary=ComplexMatrix.from_array(aligned),
        chi2=trace.final_chi2,
        reference_choice=(best_score.input, best_score.output),
        refinement=trace,
        gauge=gauge,
        conjugated=conjugated,
        candidates=[score for _, score in outcomes],
    )


def fabricated_unitary(u, sigma: float, seed=None) -> np.ndarray:
    """Unitary of a chip whose mesh coordinates deviate from those of ``u`` by N(0, sigma^2) rad.

    The noise draw does not depend on sigma, so one seed gives the same chip shape for
    every error magnitude.
    """
    u = check_unitary(u)
    if sigma < 0:
        raise UnsupportedInputError(f"fabrication sigma must be non-negative, got {sigma}")
    rng = np.random.default_rng(seed)
    thetas, deltas = mesh_coordinates(u)
    noise = rng.standard_normal((2, thetas.size))
    if sigma == 0:
        return u
    return mesh_unitary(u.shape[0], thetas + sigma * noise[0], deltas + sigma * noise[1])


def _renormalize_rows(p: np.ndarray) -> np.ndarray:
    totals = p.sum(axis=1, keepdims=True)
    return np.divide(p, totals, out=np.zeros_like(p), where=totals > 0)


def synthesize_data(
    u,
    q: float = 1.0,
    noise: NoiseModel | None = None,
    seed=None,
    coincidences: bool = True,
) -> MeasurementData:
    """Measurement data an ideal or noisy experiment on ``u`` would produce.

    Args:
        u: Unitary of the target interferometer
        q: Indistinguishability of the photon pairs
        noise: Fabrication and measurement noise; noiseless when None
        seed: Seed for every random draw
        coincidences: Also record the collision-free coincidence distributions

    Returns:
        MeasurementData with all single-photon entries and every defined visibility
    """
    u = check_unitary(u)
    m = u.shape[0]
    if m < 2:
        raise InvalidDimensionError("measurements need at least two modes")
    if not 0.0 <= q <= 1.0:
        raise UnsupportedInputError(f"indistinguishability q must lie in [0, 1], got {q}")
    noise = NoiseModel() if noise is None else noise
    rng = np.random.default_rng(seed)
    chip = fabricated_unitary(u, noise.fabrication_sigma, rng)

    p_true = np.abs(chip.T) ** 2
    keys = [(i, j, k, l) for i, j in mode_pairs(m) for k, l in mode_pairs(m)]
    I, J, K, L = (np.array(column, dtype=int) for column in zip(*keys))
    p_quantum, p_classical = _pair_probabilities(chip, I, J, K, L)
    p_partial = q * p_quantum + (1.0 - q) * p_classical
    defined = p_classical >= VISIBILITY_FLOOR
    v_sigma = np.full(len(keys), np.nan)

    if noise.kind == "none":
        p, p_sigma = p_true, np.ones_like(p_true)
        v = np.zeros(len(keys))
        np.divide(p_classical - p_partial, p_classical, out=v, where=defined)
    elif noise.kind == "gaussian":
        s = noise.relative_sigma
        p = _renormalize_rows(np.clip(p_true * (1.0 + s * rng.standard_normal(p_true.shape)), 0.0, None))
        p_sigma = np.maximum(s * p, 1e-6)
        quantum_obs = p_partial * (1.0 + s * rng.standard_normal(len(keys)))
        classical_obs = p_classical * (1.0 + s * rng.standard_normal(len(keys)))
        defined &= classical_obs >= VISIBILITY_FLOOR
        ratio = np.zeros(len(keys))
        np.divide(quantum_obs, classical_obs, out=ratio, where=defined)
        v = 1.0 - ratio
        v_sigma = np.maximum(s * math.sqrt(2.0) * np.abs(ratio), 1e-6)
    else:
        shots = noise.shots
        counts = np.stack([rng.multinomial(shots, row / row.sum()) for row in p_true])
        p = counts / shots
        p_sigma = np.sqrt(np.maximum(p * (1.0 - p), 1.0 / shots) / shots)
        n_quantum = rng.poisson(shots * p_partial).astype(float)
        n_classical = rng.poisson(shots * p_classical).astype(float)
        defined &= n_classical > 0
        ratio = np.zeros(len(keys))
        np.divide(n_quantum, n_classical, out=ratio, where=defined)
        v = 1.0 - ratio
        with np.errstate(divide="ignore", invalid="ignore"):
            v_sigma = np.maximum(ratio, 1.0 / np.maximum(n_classical, 1.0)) * np.sqrt(
                1.0 / np.maximum(n_quantum, 1.0) + 1.0 / np.maximum(n_classical, 1.0)
            )

    entries = []
    missing = []
    for n, (i, j, k, l) in enumerate(keys):
        if not defined[n]:
            missing.append((i, j, k, l))
            continue
        sigma = None if np.isnan(v_sigma[n]) else float(v_sigma[n])
        entries.append(VisibilityEntry(i=i, j=j, K=k, L=l, v=float(v[n]), sigma=sigma))

    records = []
    if coincidences:
        for i, j in mode_pairs(m):
            conditional = two_photon_distribution(chip, i, j, q, "collision_free").conditional
            if conditional is None:
                continue
            probs = np.asarray(conditional)
            if noise.kind == "gaussian":
                probs = np.clip(probs * (1.0 + noise.relative_sigma * rng.standard_normal(probs.size)), 0.0, None)
                probs = probs / probs.sum() if probs.sum() > 0 else probs
            elif noise.kind == "poisson":
                probs = rng.multinomial(noise.shots, probs / probs.sum()) / noise.shots
            records.append(CoincidenceRecord(i=i + 1, j=j + 1, probabilities=probs.tolist()))

    return MeasurementData(
        m=m,
        q=q,
        single_photon=[(float(p[i, k]), float(p_sigma[i, k])) for i in range(m) for k in range(m)],
        visibilities=VisibilityTensor(mode_count=m, entries=entries, missing=missing),
        coincidences=records,
    )


def _normalized(p: np.ndarray) -> np.ndarray:
    return _renormalize_rows(np.clip(p, 0.0, None))


def single_photon_similarity(u, data: MeasurementData) -> float:
    """Mean over inputs of the similarity between predicted and measured single-photon rows."""
    u = as_square(u)
    if u.shape[0] != data.m:
        raise InvalidDimensionError(f"{u.shape[0]}-mode matrix against {data.m}-mode data")
    observed, _ = data.single_photon_arrays()
    predicted = np.abs(u.T) ** 2
    return matrix_similarity(_normalized(predicted).T, _normalized(observed).T)


def two_photon_similarity(u, data: MeasurementData, q: float | None = None) -> float:
    """Mean over input pairs of the similarity of collision-free coincidence distributions."""
    if not data.coincidences:
        raise UnsupportedInputError("measurement data holds no coincidence distributions")
    u = check_unitary(u)
    q = data.q if q is None else q
    values = []
    for record in data.coincidences:
        predicted = two_photon_distribution(u, record.i - 1, record.j - 1, q, "collision_free").conditional
        if predicted is None:
            raise UnsupportedInputError(f"inputs ({record.i}, {record.j}) never give a coincidence")
        observed = np.asarray(record.probabilities)
        values.append(similarity(predicted, observed / observed.sum()))
    return float(np.mean(values))


def visibility_similarity(a: VisibilityTensor, b: VisibilityTensor) -> float:
    """1 - sum |V_a - V_b| / (2 n) over the n visibilities defined in both tensors."""
    va, vb = a.as_dict(), b.as_dict()
    common = sorted(set(va) & set(vb))
    if not common:
        raise UnsupportedInputError("the visibility tensors share no defined entry")
    total = sum(abs(va[key] - vb[key]) for key in common)
    return 1.0 - total / (2.0 * len(common))


def calibrate_fabrication_sigma(u, target: float = 0.946, seed=0, upper: float = 0.5, xtol: float = 1e-6) -> float:
    """Fabrication error that brings the single-photon similarity to ``target``.

    The similarity compares the fabricated chip (the mesh coordinates of ``u`` perturbed
    with a fixed noise draw) to the predictions of ``u``; synthesize_data with the same
    seed and the returned sigma builds the same chip.
    """
    u = check_unitary(u)
    if not 0.0 < target < 1.0:
        raise UnsupportedInputError(f"target similarity must lie in (0, 1), got {target}")
    ideal = np.abs(u) ** 2

    def excess(sigma: float) -> float:
        chip = fabricated_unitary(u, sigma, seed)
        return matrix_similarity(np.abs(chip) ** 2, ideal) - target

    hi = upper
    for _ in range(6):
        if excess(hi) < 0:
            return brentq(excess, 0.0, hi, xtol=xtol)
        hi *= 2.0
    raise ConvergenceError(f"no fabrication error up to {hi / 2:.3g} rad lowers the similarity to {target}")

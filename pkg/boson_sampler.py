import csv
import math
from collections import Counter
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import get_settings
from errors import (
    IntractableError,
    InvalidDimensionError,
    NormalizationError,
    PhotonNumberError,
    UndefinedVisibilityError,
    UnsupportedInputError,
)
from permanent import Algorithm, permanent, permanents_batch
from unitaries import as_square, check_unitary

FockState = tuple[int, ...]
Restrict = Literal["all", "collision_free"]

# P_cl below this is reported as a missing visibility
VISIBILITY_FLOOR = 1e-12


def fock_state(occupations, m: int | None = None) -> FockState:
    """Validate an occupation vector and return it as a tuple."""
    state = tuple(int(s) for s in occupations)
    if any(s < 0 for s in state):
        raise PhotonNumberError(f"occupations must be non-negative: {state}")
    if m is not None and len(state) != m:
        raise InvalidDimensionError(f"state {state} has {len(state)} modes, interferometer has {m}")
    return state


def parse_fock_state(text: str) -> FockState:
    """Parse ``10101`` (one digit per mode) or ``1,0,1,0,1``."""
    text = text.strip()
    parts = text.split(",") if "," in text else list(text)
    try:
        return fock_state(int(p) for p in parts)
    except ValueError as e:
        raise PhotonNumberError(f"cannot parse Fock state {text!r}") from e


def _compositions(m: int, n: int, cap: int):
    if m == 1:
        if n <= cap:
            yield (n,)
        return
    for first in range(min(n, cap) + 1):
        for rest in _compositions(m - 1, n - first, cap):
            yield (first,) + rest


def fock_states(m: int, n: int, collision_free: bool = False) -> list[FockState]:
    """All n-photon occupation vectors over m modes in lexicographic order."""
    if m < 1:
        raise InvalidDimensionError(f"mode count must be at least 1, got {m}")
    return list(_compositions(m, n, 1 if collision_free else n))


def _factorial_product(state: FockState) -> int:
    return math.prod(math.factorial(s) for s in state)


def _check_pair(u: np.ndarray, input_state, output_state) -> tuple[FockState, FockState]:
    m = u.shape[0]
    s = fock_state(input_state, m)
    t = fock_state(output_state, m)
    if sum(s) != sum(t):
        raise PhotonNumberError(f"photon number mismatch: {sum(s)} in, {sum(t)} out")
    if sum(s) < 1:
        raise PhotonNumberError("at least one photon is required")
    return s, t


def _submatrix(u: np.ndarray, s: FockState, t: FockState) -> np.ndarray:
    modes = np.arange(len(s))
    rows = np.repeat(modes, t)
    cols = np.repeat(modes, s)
    return u[np.ix_(rows, cols)]


def build_submatrix(u, input_state, output_state) -> np.ndarray:
    """U_{S,T}: column i of U repeated s_i times, row j repeated t_j times."""
    u = as_square(u)
    s, t = _check_pair(u, input_state, output_state)
    return _submatrix(u, s, t)


def output_probability(u, input_state, output_state, algorithm: Algorithm = "ryser") -> float:
    """|per(U_{S,T})|^2 / (prod s_i! prod t_j!)."""
    u = as_square(u)
    s, t = _check_pair(u, input_state, output_state)
    amplitude = permanent(_submatrix(u, s, t), algorithm)
    return abs(amplitude) ** 2 / (_factorial_product(s) * _factorial_product(t))


class OutputDistribution(BaseModel):
    """Outcome probabilities of one input state, in canonical order."""

    model_config = ConfigDict(frozen=True)

    input_state: FockState
    mode_count: int = Field(ge=1)
    model: str
    restrict: Restrict = "all"
    states: list[FockState]
    probabilities: list[float]
    raw_total: float
    conditional: list[float] | None = None
    seed: int | None = None

    @model_validator(mode="after")
    def _check(self):
        if len(self.states) != len(self.probabilities):
            raise ValueError("states and probabilities differ in length")
        if self.conditional is not None and len(self.conditional) != len(self.states):
            raise ValueError("conditional probabilities differ in length")
        if any(p < 0 for p in self.probabilities):
            raise ValueError("probabilities must be non-negative")
        if self.states != sorted(self.states):
            raise ValueError("outcomes must be in lexicographic order")
        return self

    def probability_array(self, conditional: bool = False) -> np.ndarray:
        if conditional:
            if self.conditional is None:
                raise NormalizationError("distribution has no conditional probabilities")
            return np.asarray(self.conditional)
        return np.asarray(self.probabilities)

    def probability_of(self, state) -> float:
        state = tuple(state)
        try:
            return self.probabilities[self.states.index(state)]
        except ValueError:
            return 0.0

    def to_json_dict(self) -> dict:
        outcomes = []
        for k, (state, p) in enumerate(zip(self.states, self.probabilities)):
            outcome = {"state": list(state), "p": p}
            if self.conditional is not None:
                outcome["conditional"] = self.conditional[k]
            outcomes.append(outcome)
        return {
            "input": list(self.input_state),
            "model": self.model,
            "mode_count": self.mode_count,
            "restrict": self.restrict,
            "raw_total": self.raw_total,
            "outcomes": outcomes,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, document: dict) -> "OutputDistribution":
        outcomes = document["outcomes"]
        conditional = [o["conditional"] for o in outcomes] if outcomes and "conditional" in outcomes[0] else None
        probabilities = [float(o["p"]) for o in outcomes]
        return cls(
            input_state=tuple(document["input"]),
            mode_count=document.get("mode_count", len(document["input"])),
            model=document["model"],
            restrict=document.get("restrict", "all"),
            states=[tuple(o["state"]) for o in outcomes],
            probabilities=probabilities,
            raw_total=document.get("raw_total", sum(probabilities)),
            conditional=conditional,
            seed=document.get("seed"),
        )

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as handle:
            writer = csv.writer(handle)
            header = ["state", "p"] + (["conditional"] if self.conditional is not None else [])
            writer.writerow(header)
            for k, (state, p) in enumerate(zip(self.states, self.probabilities)):
                row = ["".join(str(s) for s in state), repr(p)]
                if self.conditional is not None:
                    row.append(repr(self.conditional[k]))
                writer.writerow(row)


def _finish(u, s, states, probs, model, restrict, seed=None) -> OutputDistribution:
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    raw_total = float(probs.sum())
    conditional = None
    if restrict == "collision_free" and raw_total > 0:
        conditional = (probs / raw_total).tolist()
    return OutputDistribution(
        input_state=s,
        mode_count=u.shape[0],
        model=model,
        restrict=restrict,
        states=states,
        probabilities=probs.tolist(),
        raw_total=raw_total,
        conditional=conditional,
        seed=seed,
    )


def _prepare(u, input_state, restrict: Restrict):
    u = check_unitary(u)
    s = fock_state(input_state, u.shape[0])
    n = sum(s)
    if n < 1:
        raise PhotonNumberError("at least one photon is required")
    cap = get_settings().ryser_max
    if n > cap:
        raise IntractableError(f"{n} photons exceed the ryser cap of {cap}")
    if restrict not in ("all", "collision_free"):
        raise UnsupportedInputError(f"unknown restriction {restrict!r}")
    states = fock_states(u.shape[0], n, collision_free=restrict == "collision_free")
    return u, s, states


def full_distribution(u, input_state, restrict: Restrict = "all", algorithm: Algorithm = "ryser") -> OutputDistribution:
    """Exact output distribution of indistinguishable photons.

    Args:
        u: Interferometer unitary
        input_state: Occupation vector of the input
        restrict: ``all`` outcomes or only ``collision_free`` ones (raw mass plus the
            renormalized conditional distribution)
        algorithm: Permanent algorithm; ``ryser`` evaluates outcomes in parallel

    Returns:
        OutputDistribution tagged ``indistinguishable``
    """
    u, s, states = _prepare(u, input_state, restrict)
    stack = np.stack([_submatrix(u, s, t) for t in states])
    if algorithm == "ryser":
        perms = permanents_batch(stack)
    else:
        perms = np.array([permanent(sub, algorithm) for sub in stack])
    norms = np.array([_factorial_product(s) * _factorial_product(t) for t in states], dtype=float)
    return _finish(u, s, states, np.abs(perms) ** 2 / norms, "indistinguishable", restrict)


def classical_distribution(u, input_state, restrict: Restrict = "all") -> OutputDistribution:
    """Output distribution of fully distinguishable photons: per(|U_{S,T}|^2) / prod t_j!."""
    u, s, states = _prepare(u, input_state, restrict)
    if any(x > 1 for x in s):
        raise UnsupportedInputError("distinguishable-photon model needs a collision-free input")
    stack = np.stack([np.abs(_submatrix(u, s, t)) ** 2 for t in states]).astype(np.complex128)
    perms = permanents_batch(stack).real
    norms = np.array([_factorial_product(t) for t in states], dtype=float)
    return _finish(u, s, states, perms / norms, "classical", restrict)


def _pair_terms(u: np.ndarray, i: int, j: int, k: int, l: int) -> tuple[float, float]:
    direct = u[k, i] * u[l, j]
    exchange = u[k, j] * u[l, i]
    p_quantum = abs(direct + exchange) ** 2
    p_classical = abs(direct) ** 2 + abs(exchange) ** 2
    return p_quantum, p_classical


def _check_modes(m: int, *modes: int) -> None:
    for mode in modes:
        if not 0 <= mode < m:
            raise InvalidDimensionError(f"mode {mode} outside 0..{m - 1}")


def hom_visibility(u, i: int, j: int, k: int, l: int) -> float:
    """Two-photon visibility (P_cl - P_q) / P_cl for inputs i, j and outputs k, l (0-based)."""
    u = as_square(u)
    _check_modes(u.shape[0], i, j, k, l)
    if i == j or k == l:
        raise UnsupportedInputError("visibility needs two distinct inputs and two distinct outputs")
    p_quantum, p_classical = _pair_terms(u, i, j, k, l)
    if p_classical < VISIBILITY_FLOOR:
        raise UndefinedVisibilityError(f"P_cl = {p_classical:.3e} for inputs ({i}, {j}) outputs ({k}, {l})")
    return (p_classical - p_quantum) / p_classical


def degrade_visibility(v: float, q: float) -> float:
    if not 0.0 <= q <= 1.0:
        raise UnsupportedInputError(f"indistinguishability q must lie in [0, 1], got {q}")
    return q * v


class VisibilityEntry(BaseModel):
    """One visibility; modes are 0-based with i < j and K < L."""

    model_config = ConfigDict(frozen=True)

    i: int
    j: int
    K: int
    L: int
    v: float
    sigma: float | None = None


class VisibilityTensor(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode_count: int = Field(ge=2)
    entries: list[VisibilityEntry]
    missing: list[tuple[int, int, int, int]] = []

    def as_dict(self) -> dict[tuple[int, int, int, int], float]:
        return {(e.i, e.j, e.K, e.L): e.v for e in self.entries}

    def value(self, i: int, j: int, k: int, l: int) -> float | None:
        key = (min(i, j), max(i, j), min(k, l), max(k, l))
        for e in self.entries:
            if (e.i, e.j, e.K, e.L) == key:
                return e.v
        return None

    def to_records(self) -> list[dict]:
        records = []
        for e in self.entries:
            record = {"i": e.i + 1, "j": e.j + 1, "K": e.K + 1, "L": e.L + 1, "v": e.v}
            if e.sigma is not None:
                record["sigma"] = e.sigma
            records.append(record)
        return records

    @classmethod
    def from_records(cls, m: int, records: list[dict]) -> "VisibilityTensor":
        entries = []
        for r in records:
            i, j, k, l = int(r["i"]) - 1, int(r["j"]) - 1, int(r["K"]) - 1, int(r["L"]) - 1
            _check_modes(m, i, j, k, l)
            if i == j or k == l:
                raise UnsupportedInputError(f"visibility record with repeated modes: {r}")
            entries.append(
                VisibilityEntry(
                    i=min(i, j), j=max(i, j), K=min(k, l), L=max(k, l),
                    v=float(r["v"]), sigma=r.get("sigma"),
                )
            )
        entries.sort(key=lambda e: (e.i, e.j, e.K, e.L))
        return cls(mode_count=m, entries=entries)


def mode_pairs(m: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(m) for j in range(i + 1, m)]


def visibility_tensor(u, q: float = 1.0) -> VisibilityTensor:
    """All visibilities V(i,j;K,L), degraded by q; undefined entries go to ``missing``."""
    u = as_square(u)
    m = u.shape[0]
    if m < 2:
        raise InvalidDimensionError("visibilities need at least two modes")
    entries = []
    missing = []
    for i, j in mode_pairs(m):
        for k, l in mode_pairs(m):
            try:
                v = hom_visibility(u, i, j, k, l)
            except UndefinedVisibilityError:
                missing.append((i, j, k, l))
                continue
            entries.append(VisibilityEntry(i=i, j=j, K=k, L=l, v=degrade_visibility(v, q)))
    return VisibilityTensor(mode_count=m, entries=entries, missing=missing)


def two_photon_distribution(u, i: int, j: int, q: float = 1.0, restrict: Restrict = "all") -> OutputDistribution:
    """Photon pair in inputs i, j with indistinguishability q: q P_indist + (1 - q) P_cl."""
    u = check_unitary(u)
    m = u.shape[0]
    _check_modes(m, i, j)
    if i == j:
        raise UnsupportedInputError("photon pair needs two distinct input modes")
    if not 0.0 <= q <= 1.0:
        raise UnsupportedInputError(f"indistinguishability q must lie in [0, 1], got {q}")
    s = tuple(1 if k in (i, j) else 0 for k in range(m))
    quantum = full_distribution(u, s, restrict)
    classical = classical_distribution(u, s, restrict)
    probs = q * quantum.probability_array() + (1.0 - q) * classical.probability_array()
    return _finish(u, s, quantum.states, probs, f"partial(q={q:g})", restrict)


def indistinguishability_to_weight(p: float) -> float:
    """Weight r = p^2 of the fully interfering term for pairwise overlap p."""
    return p * p


def three_photon_partial_distribution(u, r: float, modes: tuple[int, int, int] = (0, 2, 4)) -> OutputDistribution:
    """Collision-free three-photon statistics with one distinguishable photon.

    The state is r |a, b, a'><...| + (1 - r) |a, b_dist, a'><...|: photons in modes a
    and a' always interfere, the photon in mode b does so only in the first term.

    Args:
        u: Interferometer unitary
        r: Weight of the fully indistinguishable term, in [0, 1]
        modes: Input modes (a, b, a'), 0-based; b carries the distinguishable photon

    Returns:
        OutputDistribution over collision-free triples with raw and conditional values
    """
    u = check_unitary(u)
    m = u.shape[0]
    if not 0.0 <= r <= 1.0:
        raise UnsupportedInputError(f"weight r must lie in [0, 1], got {r}")
    a, b, a2 = modes
    _check_modes(m, a, b, a2)
    if len({a, b, a2}) != 3:
        raise UnsupportedInputError(f"input modes must be distinct: {modes}")
    s = tuple(1 if k in modes else 0 for k in range(m))
    states = fock_states(m, 3, collision_free=True)
    outputs = [tuple(k for k, t in enumerate(state) if t) for state in states]

    stack = np.stack([u[np.ix_(out, [a, b, a2])] for out in outputs])
    indist = np.abs(permanents_batch(stack)) ** 2

    mixed = np.zeros(len(states))
    for n, out in enumerate(outputs):
        for x in out:
            y, z = (k for k in out if k != x)
            pair = u[y, a] * u[z, a2] + u[y, a2] * u[z, a]
            mixed[n] += abs(u[x, b]) ** 2 * abs(pair) ** 2

    probs = r * indist + (1.0 - r) * mixed
    return _finish(u, s, states, probs, f"partial(r={r:g})", "collision_free")


def sample_outcomes(dist: OutputDistribution, shots: int, seed=None, tol: float = 1e-9) -> list[FockState]:
    """Draw i.i.d. outcomes by inverse CDF over the canonical order.

    Collision-free distributions are sampled from their conditional probabilities.
    """
    if shots < 0:
        raise UnsupportedInputError(f"shots must be non-negative, got {shots}")
    probs = dist.probability_array(conditional=dist.restrict == "collision_free")
    total = float(probs.sum())
    if abs(total - 1.0) > tol:
        raise NormalizationError(f"cannot sample an unnormalized distribution (sum {total:.12f})")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(probs)
    picks = np.searchsorted(cdf, rng.random(shots) * cdf[-1], side="right")
    picks = np.minimum(picks, len(probs) - 1)
    return [dist.states[k] for k in picks]


def empirical_distribution(samples: list[FockState], template: OutputDistribution, seed=None) -> OutputDistribution:
    """Frequencies of ``samples`` over the outcome set of ``template``."""
    counts = Counter(tuple(s) for s in samples)
    unknown = set(counts) - set(template.states)
    if unknown:
        raise UnsupportedInputError(f"samples outside the outcome set: {sorted(unknown)[:3]}")
    shots = max(len(samples), 1)
    probs = np.array([counts.get(state, 0) / shots for state in template.states])
    return OutputDistribution(
        input_state=template.input_state,
        mode_count=template.mode_count,
        model=f"sampled({template.model})",
        restrict=template.restrict,
        states=template.states,
        probabilities=probs.tolist(),
        raw_total=float(probs.sum()),
        conditional=probs.tolist() if template.restrict == "collision_free" else None,
        seed=seed,
    )

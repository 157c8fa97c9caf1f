"""Triangular (Reck) mesh: decomposition of a unitary and exact recomposition.

Conventions:
    * Modes are labelled as the unitary labels them (row = output, column = input), so
      no reordering sits between the mesh and the external gauge:
      U = D(out) . E_N ... E_1 . D(in).
    * Element mode pairs are (p, q), 1-based, with p the mode whose output row is being
      nulled and q its partner. Nulling runs over p = m, m-1, ..., 2 and, for each p,
      over q = p-1 down to 1; light meets the elements in this order.
    * Elements are numbered by the mode distance p - q (adjacent pairs first), and within
      one distance from the bottom mode upward. For m = 5 the first diagonal is
      1: (5, 4), 5: (5, 3), 8: (5, 2), 10: (5, 1).
    * An element is BS(t) . diag(e^{i alpha}, e^{i beta}) on (p, q) with
      BS(t) = [[t, i r], [i r, t]] and r = sqrt(1 - t^2): t = 1 passes both modes
      straight through, t = 0 exchanges them with a factor i.
"""

import csv
import math
from enum import Enum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import InvalidDimensionError, ParseError, TopologyError, UnsupportedInputError
from unitaries import GaugePhases, check_unitary

TABLE_COLUMNS = ("i", "t", "alpha_rad", "beta_rad")

# below this a splitter amplitude is treated as exactly 0 or 1
_EDGE = 1e-12


class PhasePinning(str, Enum):
    """Which element phases are moved into the input gauge.

    INPUT_ARMS: a phase on an arm no earlier element touched moves into the input
    gauge (for m = 5 this zeroes alpha_1, beta_1, beta_5, beta_8, beta_10).
    GAUGE_FIXED: the whole relative phase of every element with an untouched arm moves
    into the input gauge, which makes the internal parameters gauge invariant.
    """

    INPUT_ARMS = "input-arms"
    GAUGE_FIXED = "gauge-fixed"


class MeshElement(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=1)
    mode_pair: tuple[int, int]
    t: float = Field(ge=0.0, le=1.0)
    alpha: float = Field(0.0, ge=0.0, le=math.pi)
    beta: float = Field(0.0, ge=0.0, le=math.pi)

    @model_validator(mode="after")
    def _two_modes(self):
        p, q = self.mode_pair
        if min(p, q) < 1 or p == q:
            raise ValueError(f"mode pair {self.mode_pair} is not two distinct 1-based modes")
        return self


class InterferometerLayout(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode_count: int = Field(ge=1)
    elements: list[MeshElement]
    external_gauge: GaugePhases

    def to_json_dict(self) -> dict:
        document = self.model_dump(mode="json")
        document["application_order"] = [index for index, _ in reck_schedule(self.mode_count)]
        return document

    @classmethod
    def from_json_dict(cls, document: dict) -> "InterferometerLayout":
        document = {key: value for key, value in document.items() if key not in ("application_order", "manifest")}
        return cls.model_validate(document)


def element_count(m: int) -> int:
    return m * (m - 1) // 2


def _nulling_steps(m: int):
    # offsets[d]: elements numbered before the pairs at mode distance d
    offsets = {}
    acc = 0
    for d in range(1, m):
        offsets[d] = acc
        acc += m - d
    for p in range(m - 1, 0, -1):
        for q in range(p - 1, -1, -1):
            yield offsets[p - q] + (m - p), p, q


def reck_schedule(m: int) -> list[tuple[int, tuple[int, int]]]:
    """(element index, 1-based mode pair (p, q)) in the order light meets the elements."""
    if m < 1:
        raise InvalidDimensionError(f"mode count must be at least 1, got {m}")
    return [(index, (p + 1, q + 1)) for index, p, q in _nulling_steps(m)]


def _block(t: float, alpha: float, beta: float) -> np.ndarray:
    r = math.sqrt(max(0.0, 1.0 - t * t))
    ea, eb = np.exp(1j * alpha), np.exp(1j * beta)
    return np.array([[t * ea, 1j * r * eb], [1j * r * ea, t * eb]])


def element_unitary(e: MeshElement, m: int) -> np.ndarray:
    """m x m identity with the element's 2 x 2 block on its mode pair."""
    if max(e.mode_pair) > m:
        raise TopologyError(f"element {e.index} acts on modes {e.mode_pair}, outside {m} modes")
    modes = [e.mode_pair[0] - 1, e.mode_pair[1] - 1]
    u = np.eye(m, dtype=np.complex128)
    u[np.ix_(modes, modes)] = _block(e.t, e.alpha, e.beta)
    return u


def _check_topology(layout: InterferometerLayout) -> None:
    m = layout.mode_count
    expected = element_count(m)
    if len(layout.elements) != expected:
        raise TopologyError(f"{m} modes need {expected} elements, layout has {len(layout.elements)}")
    if layout.external_gauge.mode_count != m:
        raise TopologyError(f"external gauge has {layout.external_gauge.mode_count} modes, layout has {m}")
    by_index = {e.index: e for e in layout.elements}
    for index, pair in reck_schedule(m):
        e = by_index.get(index)
        if e is None:
            raise TopologyError(f"element {index} is missing")
        if e.mode_pair != pair:
            raise TopologyError(f"element {index} must act on modes {pair}, not {e.mode_pair}")


def compose(layout: InterferometerLayout) -> np.ndarray:
    """Unitary realized by a layout, external gauge included."""
    _check_topology(layout)
    by_index = {e.index: e for e in layout.elements}
    gauge = layout.external_gauge
    u = np.diag(np.exp(1j * np.asarray(gauge.input_phases, dtype=float))).astype(np.complex128)
    for index, (p, q) in reck_schedule(layout.mode_count):
        e = by_index[index]
        rows = [p - 1, q - 1]
        u[rows, :] = _block(e.t, e.alpha, e.beta) @ u[rows, :]
    return np.exp(1j * np.asarray(gauge.output_phases, dtype=float))[:, None] * u


def _split_block(mp: np.ndarray, fold: bool = True) -> tuple[float, float, float, float, float]:
    """Write a 2 x 2 unitary as diag(e^{i l0}, e^{i l1}) . block(t, alpha, beta).

    Returns (t, alpha, beta, l0, l1). Folded: at most one of alpha, beta nonzero, both
    in [0, pi]. Unfolded: beta = 0 and alpha in [0, 2 pi).
    """
    t = abs(mp[0, 0])
    r = abs(mp[0, 1])
    norm = math.hypot(t, r)
    t, r = t / norm, r / norm
    if r <= _EDGE:
        return 1.0, 0.0, 0.0, np.angle(mp[0, 0]), np.angle(mp[1, 1])
    if t <= _EDGE:
        return 0.0, 0.0, 0.0, np.angle(mp[0, 1]) - math.pi / 2, np.angle(mp[1, 0]) - math.pi / 2
    delta = float(np.mod(np.angle(mp[0, 0]) - np.angle(mp[0, 1]) + math.pi / 2, 2 * math.pi))
    if not fold or delta <= math.pi:
        alpha, beta = delta, 0.0
    else:
        alpha, beta = 0.0, 2 * math.pi - delta
    return t, alpha, beta, np.angle(mp[0, 0]) - alpha, np.angle(mp[1, 1]) - beta


def _null(u: np.ndarray):
    """Run the nulling sweep; returns the diagonal remainder and the element blocks."""
    work = u.copy()
    blocks = []
    for index, p, q in _nulling_steps(work.shape[0]):
        a, b = work[p, p], work[p, q]
        n = math.hypot(abs(a), abs(b))
        # an already empty pair keeps t = 1 and no phase
        g = np.eye(2, dtype=np.complex128) if n == 0.0 else np.array([[np.conj(a), -b], [np.conj(b), a]]) / n
        cols = [p, q]
        work[:, cols] = work[:, cols] @ g
        blocks.append((index, p, q, g.conj().T))
    return work, blocks


def decompose(u, pinning: PhasePinning = PhasePinning.INPUT_ARMS, tol: float | None = None) -> InterferometerLayout:
    """Reck decomposition with phases folded into [0, pi].

    Args:
        u: Unitary to decompose
        pinning: How gauge freedom is spent on element phases
        tol: Unitarity tolerance; configured default when None

    Returns:
        Layout whose compose() reproduces ``u``

    Raises:
        NonUnitaryError: when ``u`` is not unitary within tolerance
    """
    u = check_unitary(u, tol)
    m = u.shape[0]
    pinning = PhasePinning(pinning)
    work, blocks = _null(u)

    pending = np.zeros(m)
    touched = [False] * m
    input_phases = np.zeros(m)
    params = {}
    for index, p, q, block in blocks:
        mp = block * np.exp(1j * pending[[p, q]])[None, :]
        t, alpha, beta, l0, l1 = _split_block(mp)
        fresh_p, fresh_q = not touched[p], not touched[q]
        if pinning is PhasePinning.GAUGE_FIXED and (fresh_p or fresh_q):
            # a common phase on both arms can move to the outputs; leave it all on the fresh arm
            shift = alpha if fresh_q else beta
            l0, l1 = l0 + shift, l1 + shift
            alpha, beta = alpha - shift, beta - shift
        if fresh_p:
            input_phases[p] += alpha
            alpha = 0.0
        if fresh_q:
            input_phases[q] += beta
            beta = 0.0
        touched[p] = touched[q] = True
        pending[p], pending[q] = l0, l1
        params[index] = (t, alpha, beta)

    # work . diag(pending) = D(out)
    output_phases = [float(np.angle(work[x, x]) + pending[x]) for x in range(m)]
    elements = [
        MeshElement(
            index=index,
            mode_pair=pair,
            t=min(max(params[index][0], 0.0), 1.0),
            alpha=min(max(params[index][1], 0.0), math.pi),
            beta=min(max(params[index][2], 0.0), math.pi),
        )
        for index, pair in sorted(reck_schedule(m))
    ]
    return InterferometerLayout(
        mode_count=m,
        elements=elements,
        external_gauge=GaugePhases(input_phases=tuple(input_phases), output_phases=tuple(output_phases)),
    )


def mesh_unitary(m: int, thetas, deltas) -> np.ndarray:
    """Mesh unitary from raw coordinates, t = cos theta and relative phase delta per element.

    Any real theta is accepted; a negative cos theta only costs a phase.
    """
    u = np.eye(m, dtype=np.complex128)
    for index, (p, q) in reck_schedule(m):
        t, r = math.cos(thetas[index - 1]), math.sin(thetas[index - 1])
        ed = np.exp(1j * deltas[index - 1])
        block = np.array([[t * ed, 1j * r], [1j * r * ed, t]])
        rows = [p - 1, q - 1]
        u[rows, :] = block @ u[rows, :]
    return u


def mesh_coordinates(u, tol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates (thetas, deltas) with mesh_unitary(m, thetas, deltas) equal to ``u`` up to gauge."""
    u = check_unitary(u, tol)
    m = u.shape[0]
    _, blocks = _null(u)
    pending = np.zeros(m)
    thetas = np.zeros(element_count(m))
    deltas = np.zeros(element_count(m))
    for index, p, q, block in blocks:
        mp = block * np.exp(1j * pending[[p, q]])[None, :]
        t, alpha, _, l0, l1 = _split_block(mp, fold=False)
        thetas[index - 1] = math.acos(min(t, 1.0))
        deltas[index - 1] = alpha
        pending[p], pending[q] = l0, l1
    return thetas, deltas


def _fold(delta: float) -> tuple[float, float]:
    delta = float(np.mod(delta, 2 * math.pi))
    if delta <= math.pi:
        return delta, 0.0
    return 0.0, min(2 * math.pi - delta, math.pi)


def perturb_layout(layout: InterferometerLayout, sigma: float, seed=None) -> InterferometerLayout:
    """Gaussian error of ``sigma`` rad on each element's angle arccos(t) and relative phase."""
    if sigma < 0:
        raise UnsupportedInputError(f"sigma must be non-negative, got {sigma}")
    rng = np.random.default_rng(seed)
    ordered = sorted(layout.elements, key=lambda e: e.index)
    noise = sigma * rng.standard_normal((len(ordered), 2))
    elements = []
    for e, (d_theta, d_delta) in zip(ordered, noise):
        theta = math.acos(e.t) + d_theta
        alpha, beta = _fold(e.alpha - e.beta + d_delta)
        elements.append(e.model_copy(update={"t": min(abs(math.cos(theta)), 1.0), "alpha": alpha, "beta": beta}))
    return layout.model_copy(update={"elements": elements})


def write_parameter_table(layout: InterferometerLayout, path, decimals: int | None = None) -> None:
    """CSV with columns i, t, alpha_rad, beta_rad; full precision unless ``decimals`` is given."""

    def fmt(x: float) -> str:
        return repr(float(x)) if decimals is None else f"{x:.{decimals}f}"

    with open(Path(path), "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TABLE_COLUMNS)
        for e in sorted(layout.elements, key=lambda e: e.index):
            writer.writerow([e.index, fmt(e.t), fmt(e.alpha), fmt(e.beta)])


def _mode_count_for(n_elements: int) -> int:
    m = int(round((1 + math.sqrt(1 + 8 * n_elements)) / 2))
    if element_count(m) != n_elements:
        raise TopologyError(f"{n_elements} elements do not form a triangular mesh")
    return m


def read_parameter_table(path, gauge: GaugePhases | None = None) -> InterferometerLayout:
    """Parse a parameter table written by write_parameter_table (or typed by hand).

    Blank lines and lines starting with ``#`` are skipped. Mode pairs follow the
    triangular schedule; the gauge defaults to the identity.
    """
    path = Path(path)
    rows = []
    header_seen = False
    try:
        handle = open(path, newline="")
    except OSError as e:
        raise ParseError(str(e), str(path)) from e
    with handle:
        for line_no, fields in enumerate(csv.reader(handle), start=1):
            if not fields or not "".join(fields).strip() or fields[0].lstrip().startswith("#"):
                continue
            fields = [f.strip() for f in fields]
            if not header_seen:
                if tuple(fields) != TABLE_COLUMNS:
                    raise ParseError(f"expected header {','.join(TABLE_COLUMNS)}", str(path), line_no)
                header_seen = True
                continue
            if len(fields) != len(TABLE_COLUMNS):
                raise ParseError(f"expected {len(TABLE_COLUMNS)} columns, found {len(fields)}", str(path), line_no)
            try:
                index = int(fields[0])
                t, alpha, beta = (float(x) for x in fields[1:])
            except ValueError as e:
                raise ParseError(f"not a number: {e}", str(path), line_no) from e
            if not (0.0 <= t <= 1.0 and 0.0 <= alpha <= math.pi and 0.0 <= beta <= math.pi):
                raise ParseError("t must lie in [0, 1] and phases in [0, pi]", str(path), line_no)
            rows.append((line_no, index, t, alpha, beta))
    if not header_seen:
        raise ParseError("missing header", str(path))

    m = _mode_count_for(len(rows))
    pairs = dict(reck_schedule(m))
    elements = []
    for expected, (line_no, index, t, alpha, beta) in enumerate(sorted(rows, key=lambda r: r[1]), start=1):
        if index != expected:
            raise ParseError(f"element indices must run 1..{len(rows)}, found {index}", str(path), line_no)
        elements.append(MeshElement(index=index, mode_pair=pairs[index], t=t, alpha=alpha, beta=beta))
    return InterferometerLayout(
        mode_count=m,
        elements=elements,
        external_gauge=gauge if gauge is not None else GaugePhases.identity(m),
    )

"""Physical model of the laser-written chip.

Phases come from stretching the sinusoidal S-bend between couplers, transmissivities from
rotating one arm of a directional coupler out of plane, which widens the waveguide spacing
and weakens the evanescent coupling. Units follow the fabrication drawings: mm for the
S-bend and the interaction length, um for spacings, nm for the wavelength.
"""

import json
import math
import warnings
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.integrate import quad
from scipy.optimize import bisect

from config import get_settings
from decomposition import InterferometerLayout
from errors import FabricationError, ParseError, UnattainableParameterError, UncalibratedGeometryWarning

HALF_PI = 0.5 * math.pi
_QUAD_LIMIT = 200
_BISECT_MAXITER = 200


class ChipGeometry(BaseModel):
    """Fabrication geometry. The h, L, Z and s_min defaults are placeholders."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    h: float = Field(0.04, gt=0, description="S-bend transverse extension, mm")
    L: float = Field(2.5, gt=0, description="S-bend longitudinal extension, mm")
    Z: float = Field(2.38, gt=0, description="coupler interaction length, mm")
    s_min: float = Field(10.0, gt=0, description="in-plane waveguide spacing, um")
    kappa0: float = Field(42.0, gt=0, description="coupling constant, 1/mm")
    s0: float = Field(2.4, gt=0, description="coupling decay length, um")
    wavelength: float = Field(806.0, gt=0, alias="lambda", description="nm")
    n_eff: float = Field(1.6, gt=0, lt=3)
    calibrated: bool = False

    @property
    def h_um(self) -> float:
        return self.h * 1000.0

    def to_json_dict(self) -> dict:
        return self.model_dump(by_alias=True)


def load_geometry(path=None) -> ChipGeometry:
    """Geometry from a JSON file, the BOSON_GEOMETRY_FILE setting, or the defaults."""
    if path is None:
        path = get_settings().geometry_file
    if path is None:
        return ChipGeometry()
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, str(path), e.lineno) from e
    except OSError as e:
        raise ParseError(str(e), str(path)) from e
    if isinstance(document, dict) and isinstance(document.get("geometry"), dict):
        document = document["geometry"]
    try:
        return ChipGeometry.model_validate(document)
    except ValidationError as e:
        bad = e.errors()[0]
        where = ".".join(str(part) for part in bad["loc"]) or "geometry"
        raise ParseError(f"{where}: {bad['msg']}", str(path)) from e


def injectivity_bound(L: float) -> float:
    """Largest |d| for which x -> x + d sin(2 pi x / L) stays monotone."""
    return L / (2.0 * math.pi)


def _check_deformation(L: float, d: float) -> None:
    if L <= 0:
        raise UnattainableParameterError(f"S-bend length must be positive, got {L}", (0.0, math.inf))
    bound = injectivity_bound(L)
    if not abs(d) < bound:
        raise UnattainableParameterError(f"deformation d = {d} mm makes the S-bend self-intersect", (-bound, bound))


def sbend_path_length(h: float, L: float, d: float = 0.0, tol: float = 1e-9) -> float:
    """Arc length of the deformed S-bend y = -(h/2) cos(2 pi x / L), x' = x + d sin(2 pi x / L).

    Args:
        h: Transverse extension in mm
        L: Longitudinal extension in mm
        d: Deformation parameter in mm, |d| < L / (2 pi)
        tol: Absolute quadrature tolerance in mm

    Returns:
        Path length in mm
    """
    _check_deformation(L, d)
    w = 2.0 * math.pi / L
    a = d * w
    b = 0.5 * h * w

    def speed(x):
        c = math.cos(w * x)
        s = math.sin(w * x)
        return math.hypot(1.0 + a * c, b * s)

    value, _ = quad(speed, 0.0, L, epsabs=tol, epsrel=0.0, limit=_QUAD_LIMIT)
    return value


def _length_excess(h: float, L: float, d: float) -> float:
    # length(d) - length(0) integrated as one term; the two lengths agree to ~1e-3 relative
    w = 2.0 * math.pi / L
    a = d * w
    b = 0.5 * h * w

    def excess(x):
        c = math.cos(w * x)
        s = math.sin(w * x)
        stretched = math.hypot(1.0 + a * c, b * s)
        straight = math.hypot(1.0, b * s)
        return (2.0 * a * c + a * a * c * c) / (stretched + straight)

    value, _ = quad(excess, 0.0, L, epsabs=1e-15, epsrel=1e-13, limit=_QUAD_LIMIT)
    return value


def path_length_phase(delta_length_mm: float, geometry: ChipGeometry) -> float:
    """Phase picked up over an extra path length: 2 pi n_eff dL / lambda."""
    return 2.0 * math.pi * geometry.n_eff / (geometry.wavelength * 1e-6) * delta_length_mm


def deformation_phase(d: float, geometry: ChipGeometry) -> float:
    """Phase shift of an S-bend deformed by ``d`` (mm) relative to the undeformed bend."""
    _check_deformation(geometry.L, d)
    if d == 0:
        return 0.0
    return path_length_phase(_length_excess(geometry.h, geometry.L, d), geometry)


def invert_phase_to_deformation(target: float, geometry: ChipGeometry, tol: float = 1e-14) -> float:
    """Smallest non-negative deformation realizing ``target`` in [0, pi].

    Raises:
        UnattainableParameterError: when the target is outside [0, pi] or needs a deformation
            beyond the injectivity bound; the error carries the reachable phase interval
    """
    if not 0.0 <= target <= math.pi:
        raise UnattainableParameterError(f"phase {target} rad outside [0, pi]", (0.0, math.pi))
    if target == 0.0:
        return 0.0
    d_hi = 0.999 * injectivity_bound(geometry.L)
    reachable = deformation_phase(d_hi, geometry)
    if target > reachable:
        raise UnattainableParameterError(f"phase {target:.6g} rad needs a self-intersecting S-bend", (0.0, reachable))
    return bisect(lambda d: deformation_phase(d, geometry) - target, 0.0, d_hi, xtol=tol, maxiter=_BISECT_MAXITER)


def max_deformation(geometry: ChipGeometry) -> float:
    """Deformation of the pi phase shift, the top of the calibrated range."""
    return invert_phase_to_deformation(math.pi, geometry)


def _check_angle(angle: float) -> None:
    if not 0.0 <= angle <= HALF_PI:
        raise UnattainableParameterError(f"rotation angle {angle} rad outside [0, pi/2]", (0.0, HALF_PI))


def _spacing_constants(geometry: ChipGeometry) -> tuple[float, float]:
    h = geometry.h_um
    c1 = h * h + (h + geometry.s_min) ** 2
    c2 = 2.0 * h * (h + geometry.s_min)
    return c1, c2


def coupler_spacing(angle: float, geometry: ChipGeometry) -> float:
    """Waveguide spacing in um after rotating one arm by ``angle``.

    Law of cosines s^2 = C1 - C2 cos(angle), written as s_min^2 + 2 C2 sin^2(angle/2).
    """
    _check_angle(angle)
    _, c2 = _spacing_constants(geometry)
    half = math.sin(0.5 * angle)
    return math.sqrt(geometry.s_min**2 + 2.0 * c2 * half * half)


def coupling_constant(spacing_um: float, geometry: ChipGeometry) -> float:
    return geometry.kappa0 * math.exp(-spacing_um / geometry.s0)


def coupler_transmissivity(angle: float, geometry: ChipGeometry) -> float:
    """Cross-coupled power fraction sin^2(kappa Z) of a coupler rotated by ``angle``."""
    kappa = coupling_constant(coupler_spacing(angle, geometry), geometry)
    return math.sin(kappa * geometry.Z) ** 2


def attainable_transmissivity(geometry: ChipGeometry) -> tuple[float, float]:
    """Interval of T reachable on the monotone branch kappa Z <= pi/2."""
    low = coupler_transmissivity(HALF_PI, geometry)
    if coupling_constant(geometry.s_min, geometry) * geometry.Z >= HALF_PI:
        return low, 1.0
    return low, coupler_transmissivity(0.0, geometry)


def invert_transmissivity_to_angle(T: float, geometry: ChipGeometry) -> float:
    """Rotation angle realizing the cross-coupled fraction ``T``.

    Closed-form inverse of coupler_transmissivity on the branch kappa Z <= pi/2:
    kappa Z = arcsin(sqrt(T)) fixes the spacing, the law of cosines fixes the angle.

    Raises:
        UnattainableParameterError: with the attainable interval, when no angle in
            [0, pi/2] gives T
    """
    attainable = attainable_transmissivity(geometry)
    if not 0.0 < T <= 1.0:
        raise UnattainableParameterError(f"transmissivity {T} outside (0, 1]", attainable)
    x = math.asin(math.sqrt(T))
    spacing = geometry.s0 * (math.log(geometry.kappa0 * geometry.Z) - math.log(x))
    _, c2 = _spacing_constants(geometry)
    # sin^2(angle/2), the stable form of the arccos argument
    half_sq = (spacing * spacing - geometry.s_min**2) / (2.0 * c2)
    if -1e-12 < half_sq < 0.0:
        half_sq = 0.0
    if not 0.0 <= half_sq <= 0.5 + 1e-15:
        raise UnattainableParameterError(f"transmissivity {T:.9g} not reachable by rotation", attainable)
    return min(2.0 * math.asin(math.sqrt(min(half_sq, 0.5))), HALF_PI)


class ElementRecipe(BaseModel):
    """Fabrication parameters of one mesh element."""

    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=1)
    mode_pair: tuple[int, int]
    t: float = Field(ge=0.0, le=1.0)
    transmissivity: float = Field(ge=0.0, le=1.0)
    rotation_angle: float = Field(ge=0.0, le=HALF_PI)
    deformation_alpha: float = Field(ge=0.0)
    deformation_beta: float = Field(ge=0.0)


class FabricationSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    geometry: ChipGeometry
    transmissivity_mapping: str
    max_deformation: float = Field(gt=0.0)
    elements: list[ElementRecipe]

    @model_validator(mode="after")
    def _within_calibration(self):
        for e in self.elements:
            if max(e.deformation_alpha, e.deformation_beta) > self.max_deformation * (1 + 1e-9):
                raise ValueError(f"element {e.index} deformation beyond the calibrated range")
        return self

    def to_json_dict(self) -> dict:
        document = self.model_dump(mode="json", by_alias=True)
        document["geometry"] = self.geometry.to_json_dict()
        return document

    def to_table(self) -> str:
        lines = [f"{'i':>3} {'pair':>6} {'t':>7} {'T':>8} {'angle[deg]':>11} {'d_alpha[um]':>12} {'d_beta[um]':>11}"]
        for e in self.elements:
            lines.append(
                f"{e.index:>3} {e.mode_pair[0]:>3},{e.mode_pair[1]:<2} {e.t:>7.4f} {e.transmissivity:>8.5f} "
                f"{math.degrees(e.rotation_angle):>11.4f} {e.deformation_alpha * 1e3:>12.4f} "
                f"{e.deformation_beta * 1e3:>11.4f}"
            )
        if not self.geometry.calibrated:
            lines.append("# geometry uncalibrated: h, L, Z and s_min are placeholders")
        return "\n".join(lines)


def mesh_to_transmissivity(t: float, mapping: str) -> float:
    if mapping == "cross":
        return t * t
    if mapping == "bar":
        return 1.0 - t * t
    raise UnattainableParameterError(f"unknown transmissivity mapping {mapping!r}", (0.0, 1.0))


def layout_to_fabrication(
    layout: InterferometerLayout,
    geometry: ChipGeometry | None = None,
    mapping: str | None = None,
) -> FabricationSpec:
    """Rotation angles and S-bend deformations realizing every element of ``layout``.

    Args:
        layout: Mesh parameters
        geometry: Chip geometry; defaults to load_geometry()
        mapping: ``cross`` (T = t^2) or ``bar`` (T = 1 - t^2); defaults to the setting

    Returns:
        FabricationSpec embedding the geometry used

    Raises:
        FabricationError: listing every element with an unattainable parameter
    """
    geometry = load_geometry() if geometry is None else geometry
    mapping = get_settings().transmissivity_mapping if mapping is None else mapping
    if not geometry.calibrated:
        warnings.warn(
            "chip geometry is uncalibrated; fabrication parameters are indicative only",
            UncalibratedGeometryWarning,
            stacklevel=2,
        )
    d_max = max_deformation(geometry)

    recipes = []
    failures = []
    for e in layout.elements:
        try:
            T = mesh_to_transmissivity(e.t, mapping)
            angle = invert_transmissivity_to_angle(T, geometry)
            d_alpha = invert_phase_to_deformation(e.alpha, geometry)
            d_beta = invert_phase_to_deformation(e.beta, geometry)
        except UnattainableParameterError as err:
            failures.append((e.index, str(err)))
            continue
        recipes.append(
            ElementRecipe(
                index=e.index,
                mode_pair=e.mode_pair,
                t=e.t,
                transmissivity=T,
                rotation_angle=angle,
                deformation_alpha=float(np.clip(d_alpha, 0.0, d_max)),
                deformation_beta=float(np.clip(d_beta, 0.0, d_max)),
            )
        )
    if failures:
        raise FabricationError(failures)
    return FabricationSpec(geometry=geometry, transmissivity_mapping=mapping, max_deformation=d_max, elements=recipes)

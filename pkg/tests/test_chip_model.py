import json
import math

import numpy as np
import pytest

from chip_model import (
    ChipGeometry,
    FabricationSpec,
    attainable_transmissivity,
    coupler_spacing,
    coupler_transmissivity,
    deformation_phase,
    injectivity_bound,
    invert_phase_to_deformation,
    invert_transmissivity_to_angle,
    layout_to_fabrication,
    load_geometry,
    max_deformation,
    mesh_to_transmissivity,
    path_length_phase,
    sbend_path_length,
)
from decomposition import decompose
from errors import FabricationError, ParseError, UnattainableParameterError, UncalibratedGeometryWarning

GEOMETRY = ChipGeometry()


def polyline_length(h, L, d, points=200001):
    x = np.linspace(0.0, L, points)
    w = 2 * np.pi / L
    xs = x + d * np.sin(w * x)
    ys = -0.5 * h * np.cos(w * x)
    return float(np.hypot(np.diff(xs), np.diff(ys)).sum())


@pytest.mark.parametrize("d", [0.0, 0.05, 0.2, 0.35])
def test_path_length_matches_polyline(d):
    assert sbend_path_length(0.04, 2.5, d) == pytest.approx(polyline_length(0.04, 2.5, d), rel=1e-8)


def test_flat_bend_is_straight():
    assert sbend_path_length(1e-9, 3.0) == pytest.approx(3.0, rel=1e-12)


def test_injectivity_bound():
    bound = injectivity_bound(2.5)
    assert bound == pytest.approx(2.5 / (2 * math.pi))
    with pytest.raises(UnattainableParameterError) as info:
        sbend_path_length(0.04, 2.5, bound)
    assert info.value.attainable == (-bound, bound)
    with pytest.raises(UnattainableParameterError):
        sbend_path_length(0.04, 2.5, -1.01 * bound)


def test_phase_of_extra_length():
    # 20 nm of extra path at 806 nm
    assert path_length_phase(20e-6, GEOMETRY) == pytest.approx(0.25, rel=0.05)


def test_deformation_phase_matches_length_difference():
    d = 0.15
    delta = sbend_path_length(GEOMETRY.h, GEOMETRY.L, d, tol=1e-13) - sbend_path_length(GEOMETRY.h, GEOMETRY.L, tol=1e-13)
    assert deformation_phase(d, GEOMETRY) == pytest.approx(path_length_phase(delta, GEOMETRY), rel=1e-6)


def test_deformation_phase_is_monotone():
    ds = np.linspace(0.0, 0.99 * injectivity_bound(GEOMETRY.L), 40)
    phases = [deformation_phase(d, GEOMETRY) for d in ds]
    assert phases[0] == 0.0
    assert all(b > a for a, b in zip(phases, phases[1:]))
    assert phases[-1] > math.pi


def test_deformation_phase_scales_with_index():
    denser = GEOMETRY.model_copy(update={"n_eff": 2.4})
    assert deformation_phase(0.1, denser) == pytest.approx(1.5 * deformation_phase(0.1, GEOMETRY), rel=1e-12)


@pytest.mark.parametrize("target", [1e-3, 0.1, 1.0, 2.21, math.pi])
def test_phase_inversion(target):
    d = invert_phase_to_deformation(target, GEOMETRY)
    assert 0.0 < d < injectivity_bound(GEOMETRY.L)
    assert deformation_phase(d, GEOMETRY) == pytest.approx(target, abs=1e-9)


def test_phase_inversion_edges():
    assert invert_phase_to_deformation(0.0, GEOMETRY) == 0.0
    assert max_deformation(GEOMETRY) == pytest.approx(invert_phase_to_deformation(math.pi, GEOMETRY))
    with pytest.raises(UnattainableParameterError) as info:
        invert_phase_to_deformation(4.0, GEOMETRY)
    assert info.value.attainable == (0.0, math.pi)


def test_phase_out_of_reach_on_shallow_bend():
    shallow = GEOMETRY.model_copy(update={"h": 0.001})
    with pytest.raises(UnattainableParameterError) as info:
        invert_phase_to_deformation(math.pi, shallow)
    low, high = info.value.attainable
    assert low == 0.0 and 0.0 < high < math.pi


def test_spacing_follows_law_of_cosines():
    h = GEOMETRY.h_um
    c1 = h * h + (h + GEOMETRY.s_min) ** 2
    c2 = 2 * h * (h + GEOMETRY.s_min)
    assert coupler_spacing(0.0, GEOMETRY) == GEOMETRY.s_min
    for angle in np.linspace(0.0, math.pi / 2, 9):
        assert coupler_spacing(angle, GEOMETRY) == pytest.approx(math.sqrt(c1 - c2 * math.cos(angle)), rel=1e-12)
    with pytest.raises(UnattainableParameterError):
        coupler_spacing(2.0, GEOMETRY)


def test_in_plane_coupler():
    assert coupler_transmissivity(0.0, GEOMETRY) == pytest.approx(0.99955, abs=5e-5)
    assert coupler_transmissivity(0.349, GEOMETRY) < 0.01


def test_transmissivity_decreases_with_angle():
    values = [coupler_transmissivity(a, GEOMETRY) for a in np.linspace(0.0, math.pi / 2, 30)]
    assert all(b < a for a, b in zip(values, values[1:]))
    low, high = attainable_transmissivity(GEOMETRY)
    assert low == pytest.approx(values[-1])
    assert high == pytest.approx(values[0])


def test_strong_coupler_reaches_full_transfer():
    strong = GEOMETRY.model_copy(update={"kappa0": 60.0})
    assert attainable_transmissivity(strong)[1] == 1.0


@pytest.mark.parametrize("angle", [0.02, 0.05, 0.1, 0.3, 0.7, 1.2, math.pi / 2])
def test_angle_inversion(angle):
    T = coupler_transmissivity(angle, GEOMETRY)
    assert invert_transmissivity_to_angle(T, GEOMETRY) == pytest.approx(angle, abs=1e-9)


def test_angle_inversion_edges():
    assert invert_transmissivity_to_angle(coupler_transmissivity(0.0, GEOMETRY), GEOMETRY) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(UnattainableParameterError) as info:
        invert_transmissivity_to_angle(1.0, GEOMETRY)
    assert info.value.attainable == attainable_transmissivity(GEOMETRY)
    with pytest.raises(UnattainableParameterError):
        invert_transmissivity_to_angle(0.0, GEOMETRY)


def test_mesh_to_transmissivity():
    assert mesh_to_transmissivity(0.6, "cross") == pytest.approx(0.36)
    assert mesh_to_transmissivity(0.6, "bar") == pytest.approx(0.64)
    with pytest.raises(UnattainableParameterError):
        mesh_to_transmissivity(0.6, "diagonal")


def test_fabrication_of_printed_table(printed_layout):
    with pytest.warns(UncalibratedGeometryWarning):
        spec = layout_to_fabrication(printed_layout, GEOMETRY, "cross")
    assert len(spec.elements) == 10
    deformed = [e for e in spec.elements if e.deformation_alpha > 0 or e.deformation_beta > 0]
    assert len(deformed) == 8
    for recipe, element in zip(spec.elements, printed_layout.elements):
        assert recipe.transmissivity == pytest.approx(element.t**2)
        assert coupler_transmissivity(recipe.rotation_angle, GEOMETRY) == pytest.approx(recipe.transmissivity, rel=1e-9)
        if element.alpha == 0.0:
            assert recipe.deformation_alpha == 0.0
        else:
            assert deformation_phase(recipe.deformation_alpha, GEOMETRY) == pytest.approx(element.alpha, abs=1e-9)
        if element.beta == 0.0:
            assert recipe.deformation_beta == 0.0
    assert all(e.deformation_alpha <= spec.max_deformation for e in spec.elements)


def test_fabrication_bar_mapping(printed_layout):
    with pytest.warns(UncalibratedGeometryWarning):
        spec = layout_to_fabrication(printed_layout, GEOMETRY, "bar")
    first = spec.elements[0]
    assert first.transmissivity == pytest.approx(1 - 0.19**2)
    assert spec.transmissivity_mapping == "bar"


def test_calibrated_geometry_does_not_warn(printed_layout, recwarn):
    layout_to_fabrication(printed_layout, GEOMETRY.model_copy(update={"calibrated": True}), "cross")
    assert not [w for w in recwarn if issubclass(w.category, UncalibratedGeometryWarning)]


def test_fabrication_reports_every_failure():
    # the identity decomposes into t = 1 everywhere, which the cross mapping makes T = 1, out of reach
    layout = decompose(np.eye(5))
    with pytest.warns(UncalibratedGeometryWarning), pytest.raises(FabricationError) as info:
        layout_to_fabrication(layout, GEOMETRY, "cross")
    assert len(info.value.failures) == 10
    assert sorted(index for index, _ in info.value.failures) == list(range(1, 11))


def test_fabrication_table_and_json(printed_layout):
    with pytest.warns(UncalibratedGeometryWarning):
        spec = layout_to_fabrication(printed_layout, GEOMETRY, "cross")
    table = spec.to_table().splitlines()
    assert table[0].split() == ["i", "pair", "t", "T", "angle[deg]", "d_alpha[um]", "d_beta[um]"]
    assert len(table) == 12
    assert table[-1].startswith("# geometry uncalibrated")
    document = spec.to_json_dict()
    assert document["geometry"]["lambda"] == 806.0
    assert FabricationSpec.model_validate({**document, "geometry": ChipGeometry.model_validate(document["geometry"])}) == spec


def test_geometry_validation():
    with pytest.raises(ValueError):
        ChipGeometry(n_eff=3.5)
    assert ChipGeometry(**{"lambda": 1550.0}).wavelength == 1550.0
    assert ChipGeometry(wavelength=1550.0).to_json_dict()["lambda"] == 1550.0


def test_load_geometry_defaults(monkeypatch, fresh_settings):
    monkeypatch.delenv("BOSON_GEOMETRY_FILE", raising=False)
    assert load_geometry() == ChipGeometry()


def test_load_geometry_files(tmp_path, fixtures_dir, monkeypatch, fresh_settings):
    assert load_geometry(fixtures_dir / "chip_geometry.json") == ChipGeometry()
    nested = tmp_path / "nested.json"
    nested.write_text(json.dumps({"geometry": {"h": 0.05, "calibrated": True}}))
    geometry = load_geometry(nested)
    assert geometry.h == 0.05 and geometry.calibrated
    monkeypatch.setenv("BOSON_GEOMETRY_FILE", str(nested))
    assert load_geometry().h == 0.05


def test_load_geometry_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"h": -1}))
    with pytest.raises(ParseError, match="h"):
        load_geometry(bad)
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(ParseError):
        load_geometry(broken)
    with pytest.raises(ParseError):
        load_geometry(tmp_path / "absent.json")

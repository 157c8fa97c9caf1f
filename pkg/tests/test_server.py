import asyncio
import json

import numpy as np
import pytest

import main
from sse_server import _parse_host_port
from unitaries import ComplexMatrix, gate_fidelity, haar_sample


def call(tool, *args, **kwargs):
    return asyncio.run(tool(*args, **kwargs))


def doc(u) -> dict:
    return ComplexMatrix.from_array(u).model_dump(mode="json")


def test_info_resource():
    info = main.get_boson_info()
    assert "boson-sampler" in info
    assert "entries" in info


def test_prompt_lists_every_tool():
    text = main.boson_help()
    for tool in main.TOOL_FUNCTIONS:
        assert tool.__name__ in text


def test_haar_tool():
    document = call(main.haar_unitary, 4, seed=3)
    np.testing.assert_array_equal(ComplexMatrix.model_validate(document).to_array(), haar_sample(4, seed=3))


def test_tool_errors_carry_codes():
    result = call(main.haar_unitary, 0)
    assert result["status"] == "failed"
    assert result["code"] == "invalid-dimension"
    result = call(main.decompose_unitary, doc(np.ones((2, 2))))
    assert result["code"] == "non-unitary"


def test_malformed_matrix_document_fails_without_code():
    result = call(main.gate_fidelity_tool, {"rows": 2}, {"rows": 2})
    assert result["status"] == "failed"
    assert "code" not in result


def test_decompose_and_compose_tools(sampled_raw, sampled):
    layout = call(main.decompose_unitary, doc(sampled_raw), repair=True, pinning="gauge-fixed")
    assert len(layout["elements"]) == 10
    composed = call(main.compose_layout, json.loads(json.dumps(layout)))
    assert gate_fidelity(ComplexMatrix.model_validate(composed).to_array(), sampled) >= 1 - 1e-10


def test_gate_fidelity_tool(sampled_raw, reconstructed_raw):
    result = call(main.gate_fidelity_tool, doc(sampled_raw), doc(reconstructed_raw))
    assert result["fidelity"] == pytest.approx(0.95, abs=0.005)


def test_simulate_tool(splitter):
    quantum = call(main.simulate_distribution, doc(splitter), "11")
    classical = call(main.simulate_distribution, doc(splitter), "11", classical=True)
    by_state = lambda d: {tuple(o["state"]): o["p"] for o in d["outcomes"]}
    assert by_state(quantum)[(1, 1)] == pytest.approx(0.0, abs=1e-12)
    assert by_state(classical)[(1, 1)] == pytest.approx(0.5)


def test_visibility_tool(sampled):
    result = call(main.hom_visibilities, doc(sampled), q=0.9)
    assert len(result["visibilities"]) == 100
    assert result["missing"] == []


def test_three_photon_tool(sampled):
    result = call(main.three_photon_distribution, doc(sampled), 0.397)
    assert result["input"] == [1, 0, 1, 0, 1]
    assert len(result["outcomes"]) == 10
    other = call(main.three_photon_distribution, doc(sampled), 0.397, modes=[1, 2, 3])
    assert other["input"] == [1, 1, 1, 0, 0]


def test_synthesize_and_reconstruct_tools():
    u = haar_sample(3, seed=12)
    data = call(main.synthesize_measurements, doc(u), q=0.95, seed=1)
    assert data["m"] == 3
    result = call(main.reconstruct_unitary, json.loads(json.dumps(data)), reference=doc(u))
    assert gate_fidelity(ComplexMatrix.model_validate(result["unitary"]).to_array(), u) >= 1 - 1e-8
    assert set(result["reference_choice"]) == {"input", "output"}


def test_synthesize_tool_validates_noise():
    result = call(main.synthesize_measurements, doc(haar_sample(3, seed=1)), noise="poisson")
    assert result["status"] == "failed"


def test_fabrication_tool(printed_layout):
    layout = printed_layout.to_json_dict()
    result = call(main.fabrication_spec, layout)
    assert len(result["elements"]) == 10
    assert result["table"].splitlines()[-1].startswith("# geometry uncalibrated")
    failed = call(main.fabrication_spec, layout, geometry={"Z": 0.05})
    assert failed["code"] == "fabrication"


def test_configuration_tool():
    result = call(main.server_configuration)
    assert result["tool"] == "boson-sampler"
    assert result["tools_registered"] == [f.__name__ for f in main.TOOL_FUNCTIONS]
    assert result["settings"]["transmissivity_mapping"] in ("cross", "bar")


def test_host_port_defaults(monkeypatch, fresh_settings):
    monkeypatch.delenv("MCP_SSE_HOST", raising=False)
    monkeypatch.delenv("MCP_SSE_PORT", raising=False)
    assert _parse_host_port([]) == ("127.0.0.1", 8000)


def test_host_port_precedence(monkeypatch, fresh_settings):
    monkeypatch.setenv("MCP_SSE_HOST", "0.0.0.0")
    monkeypatch.setenv("MCP_SSE_PORT", "9100")
    assert _parse_host_port([]) == ("0.0.0.0", 9100)
    assert _parse_host_port(["--host", "localhost", "--port", "9200"]) == ("localhost", 9200)


def test_host_port_rejects_bad_env(monkeypatch, fresh_settings, capsys):
    monkeypatch.setenv("MCP_SSE_PORT", "eighty")
    with pytest.raises(SystemExit) as info:
        _parse_host_port([])
    assert info.value.code == 1
    assert "error[config]: invalid value for MCP_SSE_PORT" in capsys.readouterr().err


def test_host_port_flags_skip_the_environment(monkeypatch, fresh_settings):
    monkeypatch.setenv("MCP_SSE_PORT", "eighty")
    assert _parse_host_port(["--host", "::1", "--port", "9300"]) == ("::1", 9300)


def test_host_port_rejects_out_of_range_flag():
    with pytest.raises(SystemExit) as info:
        _parse_host_port(["--port", "70000"])
    assert info.value.code == 2

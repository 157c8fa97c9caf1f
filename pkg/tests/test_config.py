import pytest

from config import Settings, get_settings
from errors import (
    BosonSamplerError,
    ConfigError,
    FabricationError,
    NonUnitaryError,
    ParseError,
    UnattainableParameterError,
)

ALL_VARS = [
    "BOSON_UNITARITY_TOL",
    "BOSON_RYSER_MAX",
    "BOSON_NAIVE_MAX",
    "BOSON_REFERENCE_THRESHOLD",
    "BOSON_WORKERS",
    "BOSON_TRANSMISSIVITY_MAPPING",
    "BOSON_GEOMETRY_FILE",
    "MCP_SSE_HOST",
    "MCP_SSE_PORT",
]


@pytest.fixture
def clean_env(monkeypatch, fresh_settings):
    for var in ALL_VARS:
        monkeypatch.delenv(var, raising=False)
    return monkeypatch


def test_defaults(clean_env):
    settings = Settings.from_env()
    assert settings.unitarity_tol == 1e-9
    assert settings.ryser_max == 20
    assert settings.naive_max == 8
    assert settings.reference_threshold == 1e-6
    assert settings.workers == 1
    assert settings.transmissivity_mapping == "cross"
    assert settings.geometry_file is None
    assert (settings.sse_host, settings.sse_port) == ("127.0.0.1", 8000)


def test_environment_overrides(clean_env):
    clean_env.setenv("BOSON_RYSER_MAX", "12")
    clean_env.setenv("BOSON_TRANSMISSIVITY_MAPPING", "bar")
    clean_env.setenv("BOSON_WORKERS", " 4 ")
    settings = Settings.from_env()
    assert settings.ryser_max == 12
    assert settings.transmissivity_mapping == "bar"
    assert settings.workers == 4


def test_blank_variable_keeps_default(clean_env):
    clean_env.setenv("BOSON_NAIVE_MAX", "")
    assert Settings.from_env().naive_max == 8


@pytest.mark.parametrize(
    "var, value",
    [
        ("BOSON_WORKERS", "zero"),
        ("BOSON_WORKERS", "0"),
        ("BOSON_TRANSMISSIVITY_MAPPING", "diagonal"),
        ("BOSON_UNITARITY_TOL", "-1"),
        ("MCP_SSE_PORT", "0"),
        ("MCP_SSE_PORT", "65536"),
    ],
)
def test_invalid_value_names_the_variable(clean_env, var, value):
    clean_env.setenv(var, value)
    with pytest.raises(ConfigError, match=var):
        Settings.from_env()


def test_get_settings_is_cached(clean_env):
    assert get_settings() is get_settings()
    clean_env.setenv("BOSON_RYSER_MAX", "10")
    assert get_settings().ryser_max == 20
    get_settings.cache_clear()
    assert get_settings().ryser_max == 10


def test_error_dict_carries_code():
    e = NonUnitaryError(0.5, 1e-9)
    assert isinstance(e, BosonSamplerError)
    assert isinstance(e, ValueError)
    assert e.residual == 0.5
    assert e.to_dict() == {"error": str(e), "code": "non-unitary", "status": "failed"}


def test_parse_error_location():
    assert str(ParseError("bad number", "table.csv", 3)) == "table.csv:3: bad number"
    assert str(ParseError("empty", "table.csv")) == "table.csv: empty"
    assert str(ParseError("oops", line=7)) == "line 7: oops"


def test_unattainable_and_fabrication_errors():
    e = UnattainableParameterError("too much", (0.0, 0.5))
    assert e.attainable == (0.0, 0.5)
    assert "[0, 0.5]" in str(e)
    f = FabricationError([(2, "t unreachable"), (7, "phase unreachable")])
    assert f.code == "fabrication"
    assert "element 2" in str(f) and "element 7" in str(f)

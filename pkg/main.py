#!/usr/bin/env python3
import sys

import numpy as np
from mcp.server.fastmcp import FastMCP

from boson_sampler import (
    classical_distribution,
    full_distribution,
    parse_fock_state,
    three_photon_partial_distribution,
    visibility_tensor,
)
from chip_model import ChipGeometry, layout_to_fabrication, load_geometry
from config import TOOL_NAME, TOOL_VERSION, get_settings
from decomposition import InterferometerLayout, PhasePinning, compose, decompose
from errors import BosonSamplerError
from reconstruction import MeasurementData, NoiseModel, reconstruct_best, synthesize_data
from unitaries import ComplexMatrix, gate_fidelity, haar_sample, repair_unitary

# Print the active configuration (stdout belongs to the stdio transport)
try:
    settings = get_settings()
    print(f"Configuration: {settings.model_dump()}", file=sys.stderr)
except BosonSamplerError as e:
    print(f"Error reading configuration: {e}", file=sys.stderr)
    # Continue anyway, every tool reports the problem when it runs
    settings = None

# Create MCP server
mcp = FastMCP("Boson Sampler Server")


def _failed(tool: str, e: Exception) -> dict:
    print(f"Exception in {tool}: {e}", file=sys.stderr)
    if isinstance(e, BosonSamplerError):
        return e.to_dict()
    return {"error": str(e), "status": "failed"}


def _matrix(document: dict, repair: bool = False) -> np.ndarray:
    u = ComplexMatrix.model_validate(document).to_array()
    return repair_unitary(u) if repair else u


# Define a resource describing the server
@mcp.resource("boson://info")
def get_boson_info() -> str:
    """Get information about the boson sampling toolkit"""
    return (
        f"{TOOL_NAME} {TOOL_VERSION}: exact boson sampling statistics, triangular-mesh decomposition, "
        "chip fabrication parameters and unitary reconstruction from one- and two-photon data. "
        "Matrices are passed as {rows, cols, entries: [[re, im], ...]} in row-major order."
    )


@mcp.tool()
async def haar_unitary(m: int, seed: int = None):
    """Sample a Haar-random unitary.

    Args:
        m: Number of modes
        seed: Optional integer seed for reproducible draws

    Returns:
        The unitary as a matrix document
    """
    try:
        print(f"Sampling {m}-mode Haar unitary with seed {seed}", file=sys.stderr)
        return ComplexMatrix.from_array(haar_sample(m, seed)).model_dump()
    except Exception as e:
        return _failed("haar_unitary", e)


@mcp.tool()
async def gate_fidelity_tool(a: dict, b: dict):
    """Gate fidelity |Tr(A B^dag)| / m of two matrices.

    Args:
        a: First matrix document
        b: Second matrix document

    Returns:
        The fidelity
    """
    try:
        print("Computing gate fidelity", file=sys.stderr)
        return {"fidelity": gate_fidelity(_matrix(a), _matrix(b))}
    except Exception as e:
        return _failed("gate_fidelity_tool", e)


@mcp.tool()
async def decompose_unitary(unitary: dict, repair: bool = False, pinning: str = "input-arms"):
    """Decompose a unitary into triangular-mesh parameters.

    Args:
        unitary: Matrix document
        repair: Project onto the nearest unitary first (for rounded matrices)
        pinning: ``input-arms`` or ``gauge-fixed``

    Returns:
        Layout with elements (t, alpha, beta), mode pairs and the external gauge
    """
    try:
        print(f"Decomposing unitary (repair={repair}, pinning={pinning})", file=sys.stderr)
        return decompose(_matrix(unitary, repair), PhasePinning(pinning)).to_json_dict()
    except Exception as e:
        return _failed("decompose_unitary", e)


@mcp.tool()
async def compose_layout(layout: dict):
    """Unitary realized by a mesh layout.

    Args:
        layout: Layout document as returned by decompose_unitary

    Returns:
        The unitary as a matrix document
    """
    try:
        print("Composing layout", file=sys.stderr)
        u = compose(InterferometerLayout.from_json_dict(layout))
        return ComplexMatrix.from_array(u).model_dump()
    except Exception as e:
        return _failed("compose_layout", e)


@mcp.tool()
async def simulate_distribution(unitary: dict, input_state: str, classical: bool = False, collision_free: bool = False):
    """Exact output distribution of a Fock input.

    Args:
        unitary: Matrix document
        input_state: Occupations such as ``10101``
        classical: Distinguishable photons instead of indistinguishable ones
        collision_free: Keep only outcomes with at most one photon per mode

    Returns:
        Outcomes with probabilities, plus conditional probabilities when collision-free
    """
    try:
        print(f"Simulating input {input_state} (classical={classical})", file=sys.stderr)
        u = _matrix(unitary)
        restrict = "collision_free" if collision_free else "all"
        state = parse_fock_state(input_state)
        dist = classical_distribution(u, state, restrict) if classical else full_distribution(u, state, restrict)
        return dist.to_json_dict()
    except Exception as e:
        return _failed("simulate_distribution", e)


@mcp.tool()
async def hom_visibilities(unitary: dict, q: float = 1.0):
    """All two-photon visibilities of a unitary.

    Args:
        unitary: Matrix document
        q: Indistinguishability of the photon pairs

    Returns:
        Visibility records with 1-based modes and the undefined entries
    """
    try:
        print(f"Computing visibilities with q={q}", file=sys.stderr)
        tensor = visibility_tensor(_matrix(unitary), q)
        return {
            "m": tensor.mode_count,
            "q": q,
            "visibilities": tensor.to_records(),
            "missing": [[x + 1 for x in key] for key in tensor.missing],
        }
    except Exception as e:
        return _failed("hom_visibilities", e)


@mcp.tool()
async def three_photon_distribution(unitary: dict, r: float, modes: list = None):
    """Collision-free three-photon statistics with one partially distinguishable photon.

    Args:
        unitary: Matrix document
        r: Weight of the fully interfering term (r = p^2 for pairwise overlap p)
        modes: Input modes (a, b, a'), 1-based; b carries the distinguishable photon

    Returns:
        The distribution over collision-free triples
    """
    try:
        modes = (1, 3, 5) if modes is None else tuple(int(x) for x in modes)
        print(f"Three-photon distribution for modes {modes}, r={r}", file=sys.stderr)
        dist = three_photon_partial_distribution(_matrix(unitary), r, tuple(x - 1 for x in modes))
        return dist.to_json_dict()
    except Exception as e:
        return _failed("three_photon_distribution", e)


@mcp.tool()
async def synthesize_measurements(
    unitary: dict,
    q: float = 1.0,
    noise: str = "none",
    relative_sigma: float = 0.0,
    shots: int = None,
    fabrication_sigma: float = 0.0,
    seed: int = None,
):
    """Synthetic single-photon and two-photon data of a unitary.

    Args:
        unitary: Matrix document
        q: Indistinguishability of the photon pairs
        noise: ``none``, ``gaussian`` or ``poisson``
        relative_sigma: Relative Gaussian noise per probability
        shots: Events per setting for Poisson noise
        fabrication_sigma: Gaussian error on the mesh coordinates, rad
        seed: Optional integer seed

    Returns:
        Measurement data document accepted by reconstruct_unitary
    """
    try:
        print(f"Synthesizing data (q={q}, noise={noise})", file=sys.stderr)
        model = NoiseModel(kind=noise, relative_sigma=relative_sigma, shots=shots, fabrication_sigma=fabrication_sigma)
        return synthesize_data(_matrix(unitary), q, model, seed).to_json_dict()
    except Exception as e:
        return _failed("synthesize_measurements", e)


@mcp.tool()
async def reconstruct_unitary(data: dict, reference: dict = None):
    """Reconstruct a unitary from measurement data.

    Args:
        data: Measurement data document
        reference: Optional matrix document to align the result to

    Returns:
        Reconstructed unitary, chi^2, chosen reference and refinement record
    """
    try:
        print("Reconstructing unitary", file=sys.stderr)
        measurements = MeasurementData.from_json_dict(data)
        ref = _matrix(reference) if reference is not None else None
        result = reconstruct_best(measurements, reference=ref)
        print(f"Reconstruction chi2 = {result.chi2:.6g}", file=sys.stderr)
        return result.to_json_dict()
    except Exception as e:
        return _failed("reconstruct_unitary", e)


@mcp.tool()
async def fabrication_spec(layout: dict, geometry: dict = None, mapping: str = None):
    """Rotation angles and S-bend deformations realizing a layout.

    Args:
        layout: Layout document
        geometry: Optional chip geometry; configured or default geometry otherwise
        mapping: ``cross`` or ``bar`` transmissivity mapping

    Returns:
        Fabrication spec with the geometry used and a printable table
    """
    try:
        print("Computing fabrication spec", file=sys.stderr)
        chip = ChipGeometry.model_validate(geometry) if geometry is not None else load_geometry()
        spec = layout_to_fabrication(InterferometerLayout.from_json_dict(layout), chip, mapping)
        document = spec.to_json_dict()
        document["table"] = spec.to_table()
        return document
    except Exception as e:
        return _failed("fabrication_spec", e)


@mcp.tool()
async def server_configuration():
    """Report the toolkit version and active settings."""
    try:
        print("Running server_configuration tool", file=sys.stderr)
        return {
            "server": "running",
            "tool": TOOL_NAME,
            "version": TOOL_VERSION,
            "settings": get_settings().model_dump(),
            "tools_registered": [f.__name__ for f in TOOL_FUNCTIONS],
        }
    except Exception as e:
        return _failed("server_configuration", e)


# Add a prompt to help the LLM use the tools
@mcp.prompt()
def boson_help() -> str:
    return """
    You have access to the following linear-optics capabilities:

    1. haar_unitary - Sample a Haar-random unitary
    2. gate_fidelity_tool - Compare two unitaries
    3. decompose_unitary - Triangular-mesh parameters (t, alpha, beta) of a unitary
    4. compose_layout - Unitary of a mesh layout
    5. simulate_distribution - Exact output distribution of a Fock input
    6. hom_visibilities - Two-photon visibilities
    7. three_photon_distribution - Three photons with one partially distinguishable
    8. synthesize_measurements - Synthetic one- and two-photon data
    9. reconstruct_unitary - Reconstruct a unitary from measurement data
    10. fabrication_spec - Chip fabrication parameters of a layout
    11. server_configuration - Version and active settings

    Matrices are documents {rows, cols, entries: [[re, im], ...]}.
    """


TOOL_FUNCTIONS = [
    haar_unitary, gate_fidelity_tool, decompose_unitary, compose_layout,
    simulate_distribution, hom_visibilities, three_photon_distribution,
    synthesize_measurements, reconstruct_unitary, fabrication_spec, server_configuration,
]


if __name__ == "__main__":
    print("Starting Boson Sampler MCP server...", file=sys.stderr)
    mcp.run()

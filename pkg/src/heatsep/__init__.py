"""Observer-based boundary control of a 1-D semilinear heat equation.

Modules
-------
modal        cosine eigenbasis and the truncated N-mode plant
residue_gain L2 gain of the neglected modes (harmonic and Sobolev bounds)
riccati      stabilizing Riccati solutions, coupling test, gains
lmi          sampled-data stability matrix and certificate search
synthesis    end-to-end design pipelines and tables
sim          spectral Galerkin closed-loop simulator
cli          command-line front end
"""

from importlib.metadata import PackageNotFoundError, version

from .modal import ModalSystem, ModeCountError, PlantParams, build_modal_system, min_modes
from .residue_gain import gamma_harmonic, gamma_sobolev, residue_gain
from .riccati import SynthesisResult, synthesize_gains
from .synthesis import max_sigma, min_feasible_N, sigma_table, stability_constant, synthesize

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"

__all__ = [
    "ModalSystem", "ModeCountError", "PlantParams", "build_modal_system", "min_modes",
    "gamma_harmonic", "gamma_sobolev", "residue_gain", "SynthesisResult", "synthesize_gains",
    "max_sigma", "min_feasible_N", "sigma_table", "stability_constant", "synthesize",
    "__version__",
]

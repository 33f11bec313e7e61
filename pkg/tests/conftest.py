"""
Shared fixtures and numerical oracles.
"""

import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

import numpy as np
import pytest
import torch

from imaging.cassi import forward, make_mask
from models.unfolding import DenoiserConfig, build_model


def dense_phi(mask: torch.Tensor, shift: int, bands: int) -> torch.Tensor:
    """Materialize Φ as an (m, n) float64 matrix by pushing every basis cube through forward."""
    height, width = mask.shape
    n = bands * height * width
    basis = torch.eye(n, dtype=torch.float64).reshape(n, bands, height, width)
    columns = forward(basis, mask.to(torch.float64), shift)
    return columns.reshape(n, -1).T


def central_difference(func, param: torch.Tensor, index: tuple, eps: float = 1e-6) -> float:
    """(f(θ + ε) − f(θ − ε)) / 2ε for one entry of ``param``."""
    with torch.no_grad():
        original = param[index].item()
        param[index] = original + eps
        plus = float(func())
        param[index] = original - eps
        minus = float(func())
        param[index] = original
    return (plus - minus) / (2 * eps)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_denoiser():
    return DenoiserConfig(base_channels=8, depth=3, mu_features=4)


@pytest.fixture
def tiny_geometry():
    """(height, width, bands, shift) small enough for dense oracles."""
    return 8, 8, 4, 1


@pytest.fixture
def tiny_mask(tiny_geometry):
    height, width, _, _ = tiny_geometry
    return make_mask(height, width, 0.5, seed=3).to(torch.float64)


@pytest.fixture
def tiny_model(tiny_geometry, tiny_denoiser):
    _, _, bands, shift = tiny_geometry
    return build_model(2, bands, shift, tiny_denoiser, seed=0).double()


@pytest.fixture
def tiny_cube(tiny_geometry):
    height, width, bands, _ = tiny_geometry
    generator = torch.Generator().manual_seed(5)
    return torch.rand(bands, height, width, generator=generator, dtype=torch.float64)

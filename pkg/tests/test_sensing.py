"""
Tests for the CASSI operator, its adjoint, diag(ΦΦᵀ) and shot noise.
"""

import pytest
import torch

from tests.conftest import dense_phi
from imaging.cassi import (
    Measurement,
    SensingConfig,
    add_noise,
    adjoint,
    forward,
    make_mask,
    measurement_width,
    phi_phiT_diag,
    simulate,
)
from utils.errors import ConfigError, DimensionError, DomainError, ParameterError
from utils.helpers import make_generator


def test_make_mask_degenerate_densities():
    assert torch.equal(make_mask(4, 4, 1.0, seed=2), torch.ones(4, 4))
    assert torch.equal(make_mask(4, 4, 0.0, seed=2), torch.zeros(4, 4))


def test_make_mask_is_deterministic_and_binary():
    a = make_mask(64, 64, 0.5, seed=7)
    b = make_mask(64, 64, 0.5, seed=7)
    assert torch.equal(a, b)
    assert set(a.unique().tolist()) <= {0.0, 1.0}


@pytest.mark.parametrize("density", [-0.1, 1.5])
def test_make_mask_rejects_bad_density(density):
    with pytest.raises(ParameterError):
        make_mask(4, 4, density)


def test_forward_zero_cube_gives_zero_measurement():
    mask = make_mask(5, 6, 0.5, seed=1)
    y = forward(torch.zeros(3, 5, 6), mask, 2)
    assert y.shape == (5, 6 + 2 * 2)
    assert torch.count_nonzero(y) == 0


def test_forward_single_band_is_masked_cube():
    mask = make_mask(5, 6, 0.5, seed=1)
    cube = torch.rand(1, 5, 6)
    assert torch.equal(forward(cube, mask, 3), mask * cube[0])


def test_forward_hand_instance():
    cube = torch.tensor([[[1.0, 2.0], [3.0, 4.0]],
                         [[5.0, 6.0], [7.0, 8.0]]])
    y = forward(cube, torch.ones(2, 2), 1)
    expected = torch.tensor([[1.0, 2.0 + 5.0, 6.0],
                             [3.0, 4.0 + 7.0, 8.0]])
    assert torch.equal(y, expected)


def test_forward_rejects_shape_mismatch():
    with pytest.raises(DimensionError):
        forward(torch.zeros(2, 4, 4), torch.ones(4, 5), 1)


def test_adjoint_zero_and_single_band():
    mask = make_mask(4, 5, 0.5, seed=4)
    assert torch.count_nonzero(adjoint(torch.zeros(4, 5 + 3), mask, 1, 4)) == 0
    y = torch.rand(4, 5)
    assert torch.equal(adjoint(y, mask, 2, 1)[0], mask * y)


def test_adjoint_rejects_inconsistent_meta():
    with pytest.raises(DimensionError):
        adjoint(torch.zeros(4, 7), torch.ones(4, 5), 1, 4)


def test_adjoint_dot_product_identity():
    generator = torch.Generator().manual_seed(0)
    for trial in range(200):
        height = int(torch.randint(1, 17, (1,), generator=generator))
        width = int(torch.randint(1, 17, (1,), generator=generator))
        bands = int(torch.randint(1, 9, (1,), generator=generator))
        shift = 1 + trial % 2
        mask = make_mask(height, width, 0.5, seed=trial).double()
        x = torch.randn(bands, height, width, generator=generator, dtype=torch.float64)
        y = torch.randn(height, measurement_width(width, shift, bands), generator=generator, dtype=torch.float64)

        lhs = torch.sum(forward(x, mask, shift) * y)
        rhs = torch.sum(x * adjoint(y, mask, shift, bands))
        assert abs(float(lhs - rhs)) <= 1e-6 * float(x.norm() * y.norm()) + 1e-12


def test_forward_and_adjoint_match_dense_matrix(tiny_mask):
    bands, shift = 3, 2
    phi = dense_phi(tiny_mask, shift, bands)
    x = torch.randn(bands, *tiny_mask.shape, dtype=torch.float64)
    y = torch.randn(tiny_mask.shape[0], measurement_width(tiny_mask.shape[1], shift, bands), dtype=torch.float64)

    assert torch.allclose(forward(x, tiny_mask, shift).reshape(-1), phi @ x.reshape(-1), atol=1e-12)
    assert torch.allclose(adjoint(y, tiny_mask, shift, bands).reshape(-1), phi.T @ y.reshape(-1), atol=1e-12)


def test_forward_is_linear(tiny_mask):
    x = torch.rand(4, *tiny_mask.shape, dtype=torch.float64)
    z = torch.rand(4, *tiny_mask.shape, dtype=torch.float64)
    lhs = forward(2.5 * x - 0.5 * z, tiny_mask, 1)
    rhs = 2.5 * forward(x, tiny_mask, 1) - 0.5 * forward(z, tiny_mask, 1)
    assert torch.allclose(lhs, rhs, rtol=1e-6, atol=1e-12)


@pytest.mark.parametrize("height,width,bands,shift", [(4, 4, 4, 1), (6, 6, 3, 1), (6, 6, 3, 2), (3, 5, 2, 0)])
def test_phi_phiT_diag_matches_dense(height, width, bands, shift):
    mask = make_mask(height, width, 0.5, seed=height * width).double()
    phi = dense_phi(mask, shift, bands)
    dense_diag = torch.diagonal(phi @ phi.T).reshape(height, -1)
    assert torch.equal(phi_phiT_diag(mask, shift, bands), dense_diag)


def test_phi_phiT_diag_edge_cases():
    mask = make_mask(4, 4, 0.5, seed=9)
    assert torch.equal(phi_phiT_diag(mask, 1, 1), mask)
    assert torch.count_nonzero(phi_phiT_diag(torch.zeros(4, 4), 1, 4)) == 0
    # interior column 3 is covered by all four bands
    assert torch.all(phi_phiT_diag(torch.ones(4, 4), 1, 4)[:, 3] == 4)


def test_add_noise_none_is_identity():
    y = torch.rand(4, 7)
    assert add_noise(y, SensingConfig(noise="none")) is y


def test_add_noise_zero_measurement_unchanged():
    y = torch.zeros(4, 7)
    assert torch.equal(add_noise(y, SensingConfig(noise="shot", bits=11)), y)


def test_add_noise_rejects_negative_entries():
    with pytest.raises(DomainError):
        add_noise(-torch.ones(2, 2), SensingConfig(noise="shot"))


def test_shot_noise_mean_and_determinism():
    cfg = SensingConfig(noise="shot", bits=11, seed=3)
    y = torch.full((100, 100), 0.37, dtype=torch.float64)
    noisy = add_noise(y, cfg)
    assert abs(float(noisy.mean()) - 0.37) < 0.01 * 0.37
    assert torch.equal(noisy, add_noise(y, cfg))
    assert not torch.equal(noisy, add_noise(y, SensingConfig(noise="shot", bits=11, seed=4)))


def test_shot_noise_scales_each_measurement_by_its_own_peak():
    batch = torch.stack([torch.full((10, 10), 1.0), torch.full((10, 10), 1e-3)]).double()
    noisy = add_noise(batch, SensingConfig(noise="shot", bits=11), make_generator(0))
    relative = (noisy - batch).abs().amax(dim=(-2, -1)) / batch.amax(dim=(-2, -1))
    assert torch.all(relative < 0.2)


def test_simulate_width_law():
    mask = make_mask(6, 9, 0.5, seed=0)
    measurement = simulate(torch.rand(5, 6, 9), mask, SensingConfig(shift=2))
    assert isinstance(measurement, Measurement)
    assert measurement.data.shape == (6, 9 + 2 * 4)
    assert (measurement.width, measurement.bands, measurement.height) == (9, 5, 6)


def test_sensing_config_validation():
    with pytest.raises(ConfigError):
        SensingConfig(shift=-1)
    with pytest.raises(ConfigError):
        SensingConfig(noise="shot", bits=0)
    with pytest.raises(ConfigError):
        SensingConfig(noise="gaussian")

"""
Tests for the HQS data step, the µ-net, the unfolding model and model statistics.
"""

import pytest
import torch
import torch.nn.functional as F

from tests.conftest import central_difference, dense_phi
from config import MU_FLOOR
from imaging.cassi import Measurement, adjoint, forward, make_mask, measurement_width, phi_phiT_diag
from models.stats import count_macs, count_parameters, model_stats
from models.unfolding import (
    Denoiser,
    DenoiserConfig,
    UnfoldingModel,
    build_model,
    data_update,
    denoise,
    estimate_mu,
    initial_estimate,
    make_student,
    reconstruct,
)
from utils.errors import ConfigError, DimensionError, DomainError, ParameterError


def test_data_update_matches_dense_formula():
    generator = torch.Generator().manual_seed(11)
    for trial in range(50):
        height, width = 3 + trial % 4, 4 + trial % 3
        bands, shift = 1 + trial % 4, trial % 3
        mask = make_mask(height, width, 0.6, seed=trial).double()
        phi = dense_phi(mask, shift, bands)
        x = torch.rand(bands, height, width, generator=generator, dtype=torch.float64)
        y = torch.rand(height, measurement_width(width, shift, bands), generator=generator, dtype=torch.float64)
        mu = 0.05 + float(torch.rand(1, generator=generator))

        denom = mu + torch.diagonal(phi @ phi.T)
        expected = x.reshape(-1) + phi.T @ ((y.reshape(-1) - phi @ x.reshape(-1)) / denom)
        result = data_update(x, y, mask, mu, shift)
        assert torch.allclose(result.reshape(-1), expected, rtol=1e-6, atol=1e-12)


def test_data_update_noiseless_fixed_point(tiny_mask, tiny_cube):
    y = forward(tiny_cube, tiny_mask, 1)
    assert torch.equal(data_update(tiny_cube, y, tiny_mask, 0.3, 1), tiny_cube)


def test_data_update_large_mu_limit(tiny_mask, tiny_cube):
    y = forward(tiny_cube, tiny_mask, 1) + 0.25
    mu = 1e9
    r = data_update(tiny_cube, y, tiny_mask, mu, 1)
    correction = adjoint(y - forward(tiny_cube, tiny_mask, 1), tiny_mask, 1, 4).norm() / mu
    # ΦΦᵀ is diagonal, so ‖r − x‖² = Σ d·res²/(µ + d)² ≤ Σ d·res²/µ²
    assert (r - tiny_cube).norm() <= correction * (1 + 1e-12)
    assert torch.allclose(r, tiny_cube, atol=1e-8)


def test_data_update_rejects_nonpositive_mu(tiny_mask, tiny_cube):
    y = forward(tiny_cube, tiny_mask, 1)
    with pytest.raises(ParameterError):
        data_update(tiny_cube, y, tiny_mask, 0.0, 1)
    with pytest.raises(ParameterError):
        data_update(tiny_cube, y, tiny_mask, torch.tensor([-1.0], dtype=torch.float64), 1)


def test_data_update_accepts_per_sample_mu(tiny_mask):
    x = torch.rand(2, 4, 8, 8, dtype=torch.float64)
    y = torch.rand(2, 8, 8 + 3, dtype=torch.float64)
    mu = torch.tensor([0.1, 2.0], dtype=torch.float64)
    batched = data_update(x, y, tiny_mask, mu, 1)
    for i in range(2):
        assert torch.allclose(batched[i], data_update(x[i], y[i], tiny_mask, float(mu[i]), 1))


def test_initial_estimate_matches_energy_normalized_backprojection(tiny_mask, tiny_cube):
    y = forward(tiny_cube, tiny_mask, 1)
    diag = phi_phiT_diag(tiny_mask, 1, 4)
    x0 = initial_estimate(y, tiny_mask, 1, 4)
    phi = dense_phi(tiny_mask, 1, 4)
    expected = phi.T @ (y.reshape(-1) / diag.clamp_min(1e-6).reshape(-1))
    assert torch.allclose(x0.reshape(-1), expected)


def test_zero_residual_denoiser_is_identity(tiny_denoiser):
    denoiser = Denoiser(4, tiny_denoiser).double().zero_residual_()
    r = torch.rand(4, 8, 8, dtype=torch.float64)
    assert torch.equal(denoiser(r), r)


def test_denoise_uses_stage_denoiser(tiny_model):
    r = torch.rand(4, 8, 8, dtype=torch.float64)
    assert torch.equal(denoise(r, tiny_model.stages[1]), tiny_model.stages[1].denoiser(r))


def test_denoiser_rejects_non_finite_input(tiny_denoiser):
    denoiser = Denoiser(4, tiny_denoiser)
    r = torch.zeros(4, 8, 8)
    r[0, 0, 0] = float("nan")
    with pytest.raises(DomainError):
        denoiser(r)


def test_denoise_gradient_matches_central_differences(tiny_model):
    stage = tiny_model.stages[0]
    r = torch.rand(1, 4, 8, 8, generator=torch.Generator().manual_seed(2), dtype=torch.float64)

    def objective():
        return denoise(r, stage).pow(2).sum()

    objective().backward()
    first, last = stage.denoiser.body[0].weight, stage.denoiser.body[-1].weight
    for weight, index in ((first, (0, 0, 0, 0)), (first, (5, 2, 1, 1)), (last, (3, 7, 2, 0)), (last, (1, 4, 1, 2))):
        numeric = central_difference(objective, weight, index)
        assert weight.grad[index].item() == pytest.approx(numeric, rel=1e-3, abs=1e-8)


def test_estimate_mu_gradient_matches_central_differences(tiny_model, tiny_mask, tiny_cube):
    y = forward(tiny_cube, tiny_mask, 1)
    mu_net = tiny_model.stages[1].mu_net

    def objective():
        return estimate_mu(y, tiny_mask, 1, tiny_model)

    objective().backward()
    for weight, index in ((mu_net.conv.weight, (2, 0, 1, 1)), (mu_net.fc1.weight, (1, 3)), (mu_net.fc2.weight, (0, 2))):
        numeric = central_difference(objective, weight, index)
        assert weight.grad[index].item() == pytest.approx(numeric, rel=1e-3, abs=1e-9)


def test_estimate_mu_is_positive_and_batched(tiny_model, tiny_mask, tiny_cube):
    y = forward(tiny_cube, tiny_mask, 1)
    mu = estimate_mu(y, tiny_mask, 0, tiny_model)
    assert mu.dim() == 0 and float(mu) > 0
    batched = estimate_mu(torch.stack([y, 2 * y]), tiny_mask, 1, tiny_model)
    assert batched.shape == (2,) and torch.all(batched > 0)
    with pytest.raises(ParameterError):
        estimate_mu(y, tiny_mask, 2, tiny_model)


def test_identity_denoisers_never_increase_measurement_residual(tiny_model, tiny_mask, tiny_cube):
    tiny_model.zero_residual_()
    y = forward(tiny_cube, tiny_mask, 1)
    xhat = tiny_model(y, tiny_mask)
    assert xhat.shape == tiny_cube.shape
    assert torch.all(torch.isfinite(xhat))
    # each identity stage moves toward y, so the residual cannot grow
    first = initial_estimate(y, tiny_mask, 1, 4)
    assert (forward(xhat, tiny_mask, 1) - y).norm() <= (forward(first, tiny_mask, 1) - y).norm() + 1e-9


def test_reconstruct_equals_manual_stage_loop(tiny_model, tiny_mask, tiny_cube):
    y = forward(tiny_cube, tiny_mask, 1)
    x = initial_estimate(y, tiny_mask, 1, 4)
    for index, stage in enumerate(tiny_model.stages):
        mu = estimate_mu(y, tiny_mask, index, tiny_model)
        x = denoise(data_update(x, y, tiny_mask, mu, 1), stage)
    assert torch.equal(reconstruct(tiny_model, Measurement(y, 1, 4), tiny_mask), x)


def test_identity_stages_with_fixed_mu_are_repeated_data_updates(tiny_model, tiny_mask, tiny_cube):
    tiny_model.zero_residual_()
    with torch.no_grad():
        for stage in tiny_model.stages:
            stage.mu_net.fc2.weight.zero_()
            stage.mu_net.fc2.bias.fill_(0.25)
    mu = float(F.softplus(torch.tensor(0.25, dtype=torch.float64))) + MU_FLOOR

    y = forward(tiny_cube, tiny_mask, 1) + 0.1
    expected = initial_estimate(y, tiny_mask, 1, 4)
    for _ in range(tiny_model.num_stages):
        expected = data_update(expected, y, tiny_mask, mu, 1)
    with torch.no_grad():
        assert torch.allclose(reconstruct(tiny_model, y, tiny_mask), expected, rtol=1e-12, atol=1e-14)


def test_reconstruct_checks_geometry(tiny_model, tiny_mask, tiny_cube):
    y = forward(tiny_cube, tiny_mask, 1)
    assert reconstruct(tiny_model, Measurement(y, 1, 4), tiny_mask).shape == (4, 8, 8)
    assert reconstruct(tiny_model, torch.stack([y, y]), tiny_mask).shape == (2, 4, 8, 8)
    with pytest.raises(DimensionError):
        reconstruct(tiny_model, Measurement(y[:, :-1], 2, 2), tiny_mask)
    with pytest.raises(DimensionError):
        reconstruct(tiny_model, y[:, :-1], tiny_mask)


def test_stages_are_unshared(tiny_model):
    first = dict(tiny_model.stages[0].named_parameters())
    second = dict(tiny_model.stages[1].named_parameters())
    assert all(first[name] is not second[name] for name in first)
    assert not torch.equal(first["denoiser.body.0.weight"], second["denoiser.body.0.weight"])


def test_build_model_is_seeded(tiny_denoiser):
    a = build_model(2, 4, 1, tiny_denoiser, seed=5)
    b = build_model(2, 4, 1, tiny_denoiser, seed=5)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)


def test_make_student_variants(tiny_model):
    student = make_student(tiny_model, 1, init="from_teacher")
    assert student.num_stages == 1
    for (name, p), q in zip(student.stages[0].named_parameters(), tiny_model.stages[0].parameters()):
        assert torch.equal(p, q), name
    assert all(p.requires_grad for p in student.parameters())

    random_student = make_student(tiny_model, 1, init="random", seed=1)
    assert random_student.denoiser_cfg == tiny_model.denoiser_cfg
    with pytest.raises(ConfigError):
        make_student(tiny_model, 3, init="from_teacher")
    with pytest.raises(ConfigError):
        make_student(tiny_model, 1, init="copy")


def test_freeze_marks_every_parameter(tiny_model):
    tiny_model.freeze()
    assert tiny_model.frozen
    assert not any(p.requires_grad for p in tiny_model.parameters())


def test_config_validation():
    with pytest.raises(ConfigError):
        DenoiserConfig(depth=0)
    with pytest.raises(ConfigError):
        UnfoldingModel(0, 4, 1)


def test_model_stats_counts_stages():
    cfg = DenoiserConfig(base_channels=32, depth=4)
    teacher = build_model(9, 8, 1, cfg, seed=0)
    student = make_student(teacher, 2)
    teacher_stats = model_stats(teacher, 16, 16)
    student_stats = model_stats(student, 16, 16)

    assert teacher_stats.param_count == count_parameters(teacher)
    assert teacher_stats.param_count == 9 * count_parameters(teacher.stages[0])
    assert student_stats.param_count * 9 == teacher_stats.param_count * 2
    assert student_stats.mac_estimate * 9 == teacher_stats.mac_estimate * 2


def test_model_stats_hand_counts():
    assert count_parameters(torch.nn.Conv2d(4, 8, 3, padding=1)) == 9 * 4 * 8 + 8 == 296

    cfg = DenoiserConfig(base_channels=8, depth=2, mu_features=4)
    denoiser = Denoiser(4, cfg)
    denoiser_macs = 9 * 4 * 8 * 64 * 64 + 9 * 8 * 4 * 64 * 64
    assert count_macs(denoiser, torch.zeros(1, 4, 64, 64)) == denoiser_macs

    stats = model_stats(build_model(1, 4, 1, cfg, seed=0), 64, 64)
    # µ-net: 3x3 conv 1->4 on the 64x67 measurement plane, then FC 4->4 and 4->1
    mu_net_macs = 9 * 1 * 4 * 64 * 67 + 4 * 4 + 4 * 1
    assert stats.mac_estimate == denoiser_macs + mu_net_macs
    assert stats.param_count == (296 + 292) + (40 + 20 + 5)

"""
Tests for synthetic scenes, metrics, cube storage and table output.
"""

import json
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from config import MANIFEST_NAME, PSNR_CAP_DB
from imaging.metrics import MetricsReport, psnr, score_scenes, ssim
from imaging.storage import load_cube, load_dataset, save_cube, save_dataset
from imaging.synthetic import SyntheticConfig, gen_synthetic, mean_band_correlation
from utils.data_processor import ABLATION_COLUMNS, DataProcessor
from utils.errors import ConfigError, MetricError, StorageError


SOURCE = SyntheticConfig(height=16, width=16, bands=8, count=6, seed=0)
TARGET = replace(SOURCE, spectral_rank=6, spectral_smoothness=0.5, spatial_smoothness=2.0, seed=1)


# ============================================================================
# Synthetic scenes
# ============================================================================

def test_synthetic_scenes_are_bounded_and_deterministic():
    cubes = gen_synthetic(SOURCE)
    assert len(cubes) == SOURCE.count
    for cube in cubes:
        assert cube.shape == (8, 16, 16)
        assert cube.min() >= 0.0 and cube.max() <= 1.0
    again = gen_synthetic(SOURCE)
    assert all(np.array_equal(a, b) for a, b in zip(cubes, again))


def test_target_domain_has_weaker_band_correlation():
    assert mean_band_correlation(gen_synthetic(SOURCE)) > mean_band_correlation(gen_synthetic(TARGET))


def test_synthetic_config_validation():
    with pytest.raises(ConfigError):
        SyntheticConfig(bands=2, spectral_rank=3)
    with pytest.raises(ConfigError):
        SyntheticConfig(spatial_smoothness=0.0)
    with pytest.raises(ConfigError):
        SyntheticConfig(count=0)


# ============================================================================
# Metrics
# ============================================================================

def test_psnr_perfect_reconstruction_is_capped(rng):
    x = rng.uniform(size=(3, 12, 12))
    assert psnr(x, x) == PSNR_CAP_DB


def test_psnr_known_value():
    x = np.full((2, 12, 12), 0.5)
    assert psnr(x + 0.1, x) == pytest.approx(20.0)


def test_psnr_shape_mismatch():
    with pytest.raises(MetricError):
        psnr(np.zeros((2, 4, 4)), np.zeros((2, 4, 5)))


def test_ssim_identity_and_symmetry(rng):
    x = rng.uniform(size=(3, 16, 16))
    y = np.clip(x + rng.normal(0, 0.05, x.shape), 0, 1)
    assert ssim(x, x) == pytest.approx(1.0)
    assert ssim(x, y) == pytest.approx(ssim(y, x))
    assert ssim(x, y) < 1.0


def test_ssim_needs_window_sized_images():
    with pytest.raises(MetricError):
        ssim(np.zeros((2, 8, 8)), np.zeros((2, 8, 8)))


def test_score_scenes_report(rng):
    x = [rng.uniform(size=(2, 12, 12)) for _ in range(3)]
    report = score_scenes(x, x)
    assert report.mean_psnr == PSNR_CAP_DB
    assert report.to_dict()["mean_ssim"] == pytest.approx(1.0)
    with pytest.raises(MetricError):
        score_scenes(x, x[:2])
    assert np.isnan(MetricsReport().mean_psnr)


# ============================================================================
# Storage
# ============================================================================

def test_cube_round_trip(tmp_path, rng):
    cube = rng.uniform(size=(4, 5, 6)).astype(np.float32)
    header = save_cube(tmp_path / "scene", cube)
    assert (header["bands"], header["height"], header["width"]) == (4, 5, 6)
    assert np.array_equal(load_cube(tmp_path / "scene.f32"), cube)
    assert (tmp_path / "scene.json").exists()


@pytest.mark.parametrize("field,value", [
    ("height", 0),
    ("bands", "four"),
    ("dtype", "f64le"),
    ("order", "rcb"),
])
def test_corrupted_header_names_the_field(tmp_path, rng, field, value):
    save_cube(tmp_path / "scene", rng.uniform(size=(4, 5, 6)))
    header_path = tmp_path / "scene.json"
    header = json.loads(header_path.read_text())
    header[field] = value
    header_path.write_text(json.dumps(header))
    with pytest.raises(StorageError) as info:
        load_cube(tmp_path / "scene")
    assert info.value.field == field


def test_missing_header_field_and_bad_payload(tmp_path, rng):
    save_cube(tmp_path / "scene", rng.uniform(size=(2, 3, 3)))
    header_path = tmp_path / "scene.json"
    header = json.loads(header_path.read_text())

    payload = bytearray((tmp_path / "scene.f32").read_bytes())
    payload[0] ^= 0xFF
    (tmp_path / "scene.f32").write_bytes(bytes(payload))
    with pytest.raises(StorageError) as info:
        load_cube(tmp_path / "scene")
    assert info.value.field == "sha256"

    del header["sha256"]
    header_path.write_text(json.dumps(header))
    with pytest.raises(StorageError) as info:
        load_cube(tmp_path / "scene")
    assert info.value.field == "sha256"


def test_dataset_round_trip_with_manifest(tmp_path):
    cubes = gen_synthetic(replace(SOURCE, count=3))
    manifest = save_dataset(tmp_path / "source", cubes, "source", extra={"config_hash": "abc"})
    assert manifest["count"] == 3 and manifest["config_hash"] == "abc"
    assert (tmp_path / "source" / MANIFEST_NAME).exists()

    loaded, loaded_manifest = load_dataset(tmp_path / "source")
    assert loaded_manifest["domain"] == "source"
    assert all(np.array_equal(a, b) for a, b in zip(cubes, loaded))


def test_dataset_missing_manifest(tmp_path):
    with pytest.raises(StorageError) as info:
        load_dataset(tmp_path)
    assert info.value.field == "manifest"


# ============================================================================
# Tables
# ============================================================================

def test_write_csv_adds_config_hash(tmp_path):
    df = DataProcessor.format_loss_history([0.5, 0.25], 'l_dis')
    path = DataProcessor.write_csv(df, tmp_path / "nested" / "loss.csv", "deadbeef")
    written = pd.read_csv(path)
    assert list(written.columns) == ['epoch', 'l_dis', 'config_hash']
    assert written['config_hash'].astype(str).tolist() == ['deadbeef', 'deadbeef']


def test_format_histories_and_traces():
    rows = DataProcessor.format_loss_history([{'epoch': 1, 'l_m': 0.1, 'total': 0.2}])
    assert list(rows.columns) == ['epoch', 'l_m', 'total']
    assert DataProcessor.format_loss_history([]).empty

    traces = [
        DataProcessor.format_tta_trace([{'iteration': 0, 'total': 1.0}, {'iteration': 1, 'total': 0.5}], sample=s)
        for s in range(2)
    ]
    assert traces[0].columns[0] == 'sample'
    mean = DataProcessor.mean_trace(traces)
    assert mean['total'].tolist() == [1.0, 0.5]
    assert 'sample' not in mean.columns


def test_format_ablation_orders_columns():
    df = DataProcessor.format_ablation([{'psnr': 30.0, 'row': 'a', 'stages': 9, 'ssim': 0.9}])
    assert list(df.columns) == [c for c in ABLATION_COLUMNS if c in ('row', 'stages', 'psnr', 'ssim')]


def test_format_filter_comparison():
    closed = np.full((1, 2, 3), 0.5)
    df = DataProcessor.format_filter_comparison(closed + 0j, closed)
    assert len(df) == 6
    assert np.allclose(df['learned'], df['closed_form'])

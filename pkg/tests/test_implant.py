import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmctwin.emitters import GEV, SIV
from qmctwin.implant import (
    ImplantSpec,
    fwhm_to_sigma,
    generate_spots,
    read_spots_csv,
    spot_statistics,
    write_spots_csv,
)


@pytest.mark.parametrize("fwhm, sigma", [(40, 16.98643600576038), (50, 21.233045007200476),
                                         (2.3548200450309493, 1.0)])
def test_fwhm_to_sigma(fwhm, sigma):
    assert fwhm_to_sigma(fwhm) == pytest.approx(sigma, rel=1e-12)


def test_fwhm_rejects_nonpositive():
    with pytest.raises(ValueError):
        fwhm_to_sigma(0)


def test_zero_lambda_gives_empty_spots():
    spots = generate_spots(ImplantSpec(GEV, grid_cols=20, mean_emitters_per_spot=0), 1)
    assert len(spots) == 20 and all(not s.emitters for s in spots)
    assert spot_statistics(spots)["mean_count"] == 0
    assert spot_statistics(spots[:1])["mean_count"] == 0


def test_spot_statistics_empty_list():
    with pytest.raises(ValueError):
        spot_statistics([])


@pytest.fixture(scope="module")
def gev_grid():
    return generate_spots(ImplantSpec(GEV, grid_cols=1000, grid_rows=100), 11, workers=4)


def test_count_mean_and_poisson_dispersion(gev_grid):
    st_ = spot_statistics(gev_grid)
    assert st_["n_spots"] == 100_000
    assert 1.99 <= st_["mean_count"] <= 2.01
    assert st_["count_var"] == pytest.approx(2.0, rel=0.03)


def test_depth_and_straggle(gev_grid):
    st_ = spot_statistics(gev_grid)
    assert abs(st_["depth_mean"] - 74) <= 0.5
    assert abs(st_["depth_std"] - 12) <= 0.5
    assert st_["lateral_fwhm_est"] == pytest.approx(40, abs=1)


def test_siv_lateral_fwhm():
    spots = generate_spots(ImplantSpec(SIV, grid_cols=1000, grid_rows=100, mean_emitters_per_spot=1), 5)
    st_ = spot_statistics(spots)
    assert abs(st_["lateral_fwhm_est"] - 50) <= 2
    assert abs(st_["depth_mean"] - 113) <= 0.5


def test_stable_fraction_and_depths_positive():
    spots = generate_spots(ImplantSpec(GEV, grid_cols=500, grid_rows=20, stable_fraction=0.3), 9)
    assert spot_statistics(spots)["stable_fraction"] == pytest.approx(0.3, abs=0.015)
    assert all(e.position_nm[2] > 0 for s in spots for e in s.emitters)


def test_row_major_layout():
    spec = ImplantSpec(GEV, pitch_nm=500, grid_cols=3, grid_rows=2)
    spots = generate_spots(spec, 0)
    assert [(s.col, s.row) for s in spots] == [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)]
    assert spots[4].nominal_xy_nm == (500.0, 500.0)


@settings(max_examples=15)
@given(st.integers(0, 2**64 - 1), st.integers(1, 4))
def test_determinism_independent_of_workers(seed, workers):
    spec = ImplantSpec(GEV, grid_cols=40, grid_rows=30)
    assert generate_spots(spec, seed, 1) == generate_spots(spec, seed, workers)


def test_csv_round_trip_is_exact(tmp_path):
    spec = ImplantSpec(GEV, grid_cols=7, grid_rows=3, stable_fraction=0.5, mean_emitters_per_spot=3)
    spots = generate_spots(spec, 123)
    path = tmp_path / "spots.csv"
    write_spots_csv(spots, path)
    back = read_spots_csv(path, spec)
    assert back == spots
    header = path.read_text().splitlines()[0]
    assert header.startswith("spot_col,spot_row,emitter_idx,x_nm,y_nm,z_nm")


@pytest.mark.parametrize("kw", [dict(pitch_nm=0), dict(grid_cols=0), dict(mean_emitters_per_spot=-1),
                                dict(stable_fraction=1.5)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        ImplantSpec(GEV, **kw)


def test_lateral_sigma_matches_gaussian():
    spots = generate_spots(ImplantSpec(GEV, grid_cols=300, grid_rows=100), 2)
    dx = np.array([e.position_nm[0] - s.nominal_xy_nm[0] for s in spots for e in s.emitters])
    assert dx.std() == pytest.approx(40 / (2 * math.sqrt(2 * math.log(2))), rel=0.02)

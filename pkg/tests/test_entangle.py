from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from src import entangle
from src.entangle import GridTooLargeError, OracleGrid, RegimeLabel
from src.qmc import Estimate, QmcConfig
from src.spectra import (
    CONSTANTS,
    MICROKELVIN,
    ModelParams,
    default_catalog,
    doppler_temperature,
    find_line,
    recoil_temperature,
    reduce,
)

QUICK = QmcConfig(samples_per_replicate=16384, replicates=8, seed=7)


def _line(name: str):
    return find_line(default_catalog(), name)


def _consistent_cs():
    """Cs-D2 mit Temperaturen exakt aus den SI-Daten."""
    cs = _line("Cs-D2")
    return replace(
        cs,
        t_recoil=recoil_temperature(cs, derive=True) / MICROKELVIN,
        t_doppler=doppler_temperature(cs, derive=True) / MICROKELVIN,
    )


def _separable(atom, photon, params):
    envelope = np.exp(-np.sum(atom.q**2, axis=-1) / (4.0 * params.u))
    return envelope * photon.sin_theta / (photon.delta - 0.25 + 0.5j)


def _within(result, reference: float, slack: float = 0.01) -> bool:
    return abs(result.purity - reference) <= 3.0 * result.std_error + slack


# --- Schmidt-Zahl und Schätzer ----------------------------------------------


@pytest.mark.parametrize("purity_value, rank", [(1.0, 1.0), (0.5, 2.0), (0.25, 4.0), (1.03, 1.0)])
def test_schmidt_rank(purity_value, rank):
    assert entangle.schmidt_rank(purity_value) == rank


def test_schmidt_rank_rejects_nonpositive():
    with pytest.raises(ValueError):
        entangle.schmidt_rank(0.0)


@pytest.mark.parametrize("u, expected", [(1.0, 2.0), (0.1, 20.0), (4.0, 1.0)])
def test_recoil_rank_estimate(u, expected):
    assert entangle.recoil_rank_estimate(u) == pytest.approx(expected)


def test_doppler_rank_estimate_examples():
    assert entangle.doppler_rank_estimate(4.0 * 625.0**2, 625.0) == pytest.approx(2.355, abs=5e-4)
    assert entangle.doppler_rank_estimate(4.0 * 625.0**2, 625.0) == pytest.approx(math.sqrt(8.0 * math.log(2.0)))
    assert entangle.doppler_rank_estimate(6.25e7, 625.0) == pytest.approx(14.89, abs=5e-3)
    assert entangle.doppler_rank_estimate(625.0**2 / (2.0 * math.log(2.0)), 625.0) == pytest.approx(1.0)
    assert entangle.doppler_rank_estimate(625.0, 625.0) == 1.0


def test_estimates_reject_nonpositive_arguments():
    with pytest.raises(ValueError):
        entangle.recoil_rank_estimate(0.0)
    with pytest.raises(ValueError):
        entangle.doppler_rank_estimate(1.0, 0.0)


# --- Schwellen und Linienbreiten --------------------------------------------


def test_thresholds_from_line_table():
    assert entangle.recoil_threshold(_line("Cs-D2")) == pytest.approx(0.20e-6)
    assert entangle.doppler_threshold(_line("Sr-narrow")) == pytest.approx(0.28174e-6, rel=1e-4)
    assert entangle.doppler_threshold(_line("Cs-D2")) == pytest.approx(0.3125)


def test_effective_linewidth_equals_natural_at_doppler_threshold():
    cs = _line("Cs-D2")
    t_de = entangle.doppler_threshold(cs)
    assert entangle.effective_linewidth(t_de, cs) == pytest.approx(entangle.natural_linewidth(cs), rel=1e-12)
    assert entangle.natural_linewidth(cs) == pytest.approx(cs.gamma, rel=5e-3)


def test_effective_linewidth_ratio_for_cs_at_one_kelvin():
    params = reduce(_line("Cs-D2"), 1.0, with_epsilon=False)
    assert params.u == pytest.approx(5e6)
    assert entangle.effective_linewidth_ratio(params.u, params.d) == pytest.approx(1.789, abs=5e-4)


def test_doppler_shift_of_rms_momentum_at_threshold_is_one_linewidth():
    line = _consistent_cs()
    q_parallel = math.sqrt(line.mass_kg * CONSTANTS.boltzmann * entangle.doppler_threshold(line))
    assert entangle.doppler_shift(q_parallel, line) == pytest.approx(line.gamma, rel=1e-9)
    assert entangle.natural_linewidth(line) == pytest.approx(line.gamma, rel=1e-9)


def test_doppler_shift_ratio_matches_resonance_offset():
    assert entangle.doppler_shift_ratio(3.0, 1.5) == pytest.approx(1.0)


# --- Regime -----------------------------------------------------------------


@pytest.mark.parametrize(
    "u, d, label",
    [
        (0.5, 625.0, RegimeLabel.RECOIL),
        (1.0, 625.0, RegimeLabel.RECOIL),
        (625.0, 625.0, RegimeLabel.PLATEAU),
        (4.0 * 625.0**2, 625.0, RegimeLabel.DOPPLER),
        (1e9, 625.0, RegimeLabel.DOPPLER),
        (10.0, 0.4, RegimeLabel.MIXED),
        (0.01, 0.5, RegimeLabel.MIXED),
    ],
)
def test_classify(u, d, label):
    regime = entangle.classify(ModelParams(u=u, d=d))
    assert regime.label is label
    assert regime.recoil_threshold_u == 1.0
    assert regime.doppler_threshold_u == pytest.approx(4.0 * d**2)


def test_classify_boundaries_match_estimate_crossings():
    d = 625.0
    assert entangle.recoil_rank_estimate(entangle.classify(ModelParams(u=1.0, d=d)).recoil_threshold_u) == 2.0
    doppler_u = entangle.classify(ModelParams(u=1.0, d=d)).doppler_threshold_u
    assert entangle.doppler_rank_estimate(doppler_u, d) == pytest.approx(2.3548, abs=1e-4)


def test_sr_narrow_is_mixed_at_any_temperature():
    sr = _line("Sr-narrow")
    for t_u in (1e-9, 0.46e-6, 1e-3):
        assert entangle.classify(reduce(sr, t_u, with_epsilon=False)).label is RegimeLabel.MIXED


# --- Referenz-Purity --------------------------------------------------------


def test_reduced_purity_limits():
    assert entangle.reduced_purity(ModelParams(u=1e6, d=1e6)) == pytest.approx(1.0, abs=1e-3)
    assert entangle.reduced_purity(ModelParams(u=1.0, d=1e6)) == pytest.approx(0.634, abs=5e-3)
    assert entangle.reduced_purity(ModelParams(u=625.0, d=625.0)) > 0.99
    assert 0.25 < entangle.reduced_purity(ModelParams(u=4.0 * 625.0**2, d=625.0)) < 0.40


def test_reduced_purity_is_monotone_in_recoil_regime():
    values = [entangle.reduced_purity(ModelParams(u=u, d=625.0)) for u in (0.05, 0.1, 0.3, 1.0, 10.0)]
    assert values == sorted(values)


def test_reduced_purity_requires_zero_epsilon():
    with pytest.raises(ValueError):
        entangle.reduced_purity(ModelParams(u=1.0, d=1.0, epsilon=1e-6))


def test_analytic_norm():
    assert entangle.analytic_norm(ModelParams(u=1.0, d=3.0)) == pytest.approx(
        (2.0 * math.pi) ** 1.5 * 16.0 * math.pi**2 / 3.0
    )


# --- QMC-Purity -------------------------------------------------------------


@pytest.mark.parametrize(
    "u, d",
    [(1.0, 625.0), (0.3, 0.391), (3.0, 1.5), (4.0 * 625.0**2, 625.0)],
)
def test_purity_matches_reduced_reference(u, d):
    params = ModelParams(u=u, d=d)
    result = entangle.purity(params, QUICK)
    assert _within(result, entangle.reduced_purity(params))
    assert result.schmidt_rank == pytest.approx(1.0 / min(result.purity, 1.0))
    assert abs(result.norm_deviation) < 0.02


def test_purity_separable_amplitude_is_pure():
    result = entangle.purity(ModelParams(u=4.0, d=2.0), QUICK, amplitude=_separable)
    assert abs(result.purity - 1.0) <= max(3.0 * result.std_error, 0.03)
    assert result.norm_deviation is None


def test_detuning_proposals_agree():
    params = ModelParams(u=2.0, d=1.0)
    balanced = entangle.purity(params, QUICK)
    resonance = entangle.purity(params, replace(QUICK, detuning_proposal="resonance"))
    combined = math.hypot(balanced.std_error, resonance.std_error)
    assert abs(balanced.purity - resonance.purity) <= 3.0 * combined + 0.01


def test_purity_is_reproducible_across_job_counts():
    params = ModelParams(u=1.0, d=2.0)
    config = QmcConfig(samples_per_replicate=4096, replicates=4, seed=3)
    assert entangle.purity(params, config) == entangle.purity(params, config, n_jobs=3)


def test_purity_with_epsilon_runs_without_norm_reference():
    result = entangle.purity(ModelParams(u=1.0, d=625.0, epsilon=1e-8), QUICK)
    assert result.norm_deviation is None
    assert _within(result, entangle.reduced_purity(ModelParams(u=1.0, d=625.0)))


def test_purity_consistent_when_replicates_quadruple():
    params = ModelParams(u=1.5, d=2.0)
    few = entangle.purity(params, QmcConfig(samples_per_replicate=8192, replicates=4, seed=21))
    many = entangle.purity(params, QmcConfig(samples_per_replicate=8192, replicates=16, seed=21))
    combined = math.hypot(few.std_error, many.std_error)
    assert abs(few.purity - many.purity) <= 3.0 * combined + 0.005


def _fake_integrate(quad: Estimate, norm: Estimate):
    def integrate(f, config, *, n_jobs=1):
        return quad if config.dimension == 12 else norm

    return integrate


def test_purity_warns_on_low_precision(monkeypatch):
    monkeypatch.setattr(
        entangle.qmc,
        "integrate",
        _fake_integrate(Estimate(0.5, 0.2, (0.5, 0.5)), Estimate(1.0, 0.01, (1.0, 1.0))),
    )
    result = entangle.purity(ModelParams(u=1.0, d=1.0), QUICK, amplitude=_separable)
    assert result.purity == pytest.approx(0.5)
    assert result.std_error == pytest.approx(0.5 * math.sqrt(0.16 + 4e-4))
    assert any("Präzision" in message for message in result.warnings)


def test_purity_nonpositive_estimate_gives_infinite_rank(monkeypatch):
    monkeypatch.setattr(
        entangle.qmc,
        "integrate",
        _fake_integrate(Estimate(-0.1, 0.05, (-0.1, -0.1)), Estimate(1.0, 0.01, (1.0, 1.0))),
    )
    result = entangle.purity(ModelParams(u=1.0, d=1.0), QUICK, amplitude=_separable)
    assert result.purity == pytest.approx(-0.1)
    assert math.isinf(result.schmidt_rank)
    assert result.warnings


def test_purity_overshoot_is_reported_not_clipped(monkeypatch):
    monkeypatch.setattr(
        entangle.qmc,
        "integrate",
        _fake_integrate(Estimate(1.02, 0.01, (1.02, 1.02)), Estimate(1.0, 0.001, (1.0, 1.0))),
    )
    result = entangle.purity(ModelParams(u=1.0, d=1.0), QUICK, amplitude=_separable)
    assert result.purity == pytest.approx(1.02)
    assert result.schmidt_rank == 1.0
    assert not result.warnings


# --- Gitter-Orakel ----------------------------------------------------------


def test_svd_purity_of_rank_one_matrix():
    rng = np.random.default_rng(1)
    a = rng.normal(size=20) + 1j * rng.normal(size=20)
    b = rng.normal(size=30) + 1j * rng.normal(size=30)
    assert entangle.svd_purity(np.outer(a, b)) == pytest.approx(1.0, abs=1e-12)


def test_svd_purity_of_two_equal_modes():
    matrix = np.zeros((5, 6))
    matrix[0, 0] = matrix[3, 2] = 2.5
    assert entangle.svd_purity(matrix) == pytest.approx(0.5, abs=1e-14)
    assert entangle.quadruple_sum_purity(matrix) == pytest.approx(0.5, abs=1e-14)


def test_svd_and_quadruple_sum_agree_on_random_matrix():
    rng = np.random.default_rng(5)
    matrix = rng.normal(size=(40, 60)) + 1j * rng.normal(size=(40, 60))
    assert entangle.quadruple_sum_purity(matrix) == pytest.approx(entangle.svd_purity(matrix), rel=1e-10)


def test_oracle_routes_agree_on_kernel_grid():
    params = ModelParams(u=1.0, d=2.0)
    grid = OracleGrid(atom_nodes=5, detuning_nodes=4, polar_nodes=6, azimuth_nodes=8)
    svd = entangle.purity_oracle(params, grid)
    quadruple = entangle.purity_oracle(params, grid, method="quadruple")
    assert quadruple == pytest.approx(svd, rel=1e-10)
    assert 0.0 < svd <= 1.0


def test_oracle_separable_amplitude_is_pure():
    grid = OracleGrid(atom_nodes=4, detuning_nodes=4, polar_nodes=4, azimuth_nodes=4)
    assert entangle.purity_oracle(ModelParams(u=1.0, d=1.0), grid, amplitude=_separable) == pytest.approx(1.0, abs=1e-10)


def test_oracle_rejects_oversized_grid():
    grid = OracleGrid(atom_nodes=10, detuning_nodes=6, polar_nodes=12, azimuth_nodes=16, max_cells=1000)
    with pytest.raises(GridTooLargeError) as excinfo:
        entangle.oracle_matrix(ModelParams(u=1.0, d=1.0), grid)
    assert excinfo.value.required == 1000 * 1152
    assert excinfo.value.limit == 1000


def test_oracle_rejects_unknown_method():
    grid = OracleGrid(atom_nodes=2, detuning_nodes=2, polar_nodes=2, azimuth_nodes=2)
    with pytest.raises(ValueError):
        entangle.purity_oracle(ModelParams(u=1.0, d=1.0), grid, method="trace")


def test_oracle_extents():
    atom, detuning = entangle.oracle_extents(ModelParams(u=4.0, d=0.1))
    assert atom == pytest.approx(11.0)
    assert detuning == pytest.approx(100.0)
    assert entangle.oracle_extents(ModelParams(u=1.0, d=625.0))[1] == 10.0

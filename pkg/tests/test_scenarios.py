"""Tests for the scenario catalog and its acceptance checks."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.dynamics import EvolutionRecord, PairRecord
from src.field_core import Boundary, ComplexField, inner_product, norm
from src.flow import oscillator_eigenfunction
from src.scenarios import (
    CATALOG,
    DEFAULTS,
    analytic_record,
    build,
    free_gaussian_starts,
    free_gaussian_width,
    gaussian_packet,
    run_acceptance,
)


def test_catalog_lists_every_scenario():
    assert len(CATALOG) == 9
    assert set(CATALOG) == set(DEFAULTS)
    assert 'noQ_divergence_pair' in CATALOG


def test_build_rejects_unknown_names_and_params():
    with pytest.raises(ValueError, match='unknown scenario'):
        build('double_slit')
    with pytest.raises(ValueError, match='sigma'):
        build('ho_ground', {'sigma': 2.0})


def test_build_merges_overrides():
    scenario = build('free_gaussian', {'points': 128, 'k0': 1.5, 'workers': 2})
    assert scenario.grid.points == (128,)
    assert scenario.params['k0'] == 1.5
    assert scenario.params['sigma0'] == DEFAULTS['free_gaussian']['sigma0']
    assert DEFAULTS['free_gaussian']['points'] == 512


def test_scenarios_are_frozen():
    scenario = build('ho_ground')
    with pytest.raises(Exception):
        scenario.steps = 5
    assert scenario.model_copy(update={'steps': 5}).steps == 5


def test_grid_backed_scenarios_have_normalized_states():
    for name in ('ho_ground', 'ho_coherent', 'free_gaussian', 'two_particle_cm_planewave', 'noQ_divergence_pair'):
        psi = build(name).initial_state()
        assert norm(psi) == pytest.approx(1.0, abs=1e-8), name


def test_toy_scenario_has_no_grid():
    scenario = build('toy_chaos_sweep')
    assert scenario.grid is None
    with pytest.raises(ValueError):
        scenario.initial_state()
    with pytest.raises(ValueError):
        scenario.evolve()


def test_hydrogen_uses_walled_radial_grid():
    scenario = build('hydrogen_radial')
    assert scenario.grid.boundary == Boundary.DIRICHLET
    assert scenario.grid.lower == (0.0,)
    assert scenario.reference['energy'] == pytest.approx(-0.5)
    u = scenario.initial_state()
    assert u.values[0] == 0.0


def test_gaussian_packet_is_normalized(line_grid):
    x = line_grid.axis(0)
    psi = ComplexField(grid=line_grid, values=gaussian_packet(x, sigma=0.7, center=1.0, k0=2.0, chirp=0.3))
    assert norm(psi) == pytest.approx(1.0, abs=1e-12)
    density = np.abs(psi.values) ** 2 * line_grid.spacing[0]
    assert np.sum(x * density) == pytest.approx(1.0, abs=1e-10)
    assert np.sqrt(np.sum((x - 1.0) ** 2 * density)) == pytest.approx(0.7, abs=1e-8)


def test_free_width_law():
    assert free_gaussian_width(0.0, 1.5) == pytest.approx(1.5)
    assert free_gaussian_width(2.0, 1.0) == pytest.approx(np.sqrt(2.0))
    assert free_gaussian_width(2.0, 1.0, mass=2.0) == pytest.approx(np.sqrt(1.25))
    assert free_gaussian_width(np.array([0.0, 2.0]), 1.0).shape == (2,)


def test_seeded_starts():
    a = free_gaussian_starts(7)
    assert np.array_equal(a, free_gaussian_starts(7))
    assert a.shape == (5,)
    assert np.all((np.abs(a) >= 0.5) & (np.abs(a) <= 2.5))
    assert not np.array_equal(a, free_gaussian_starts(8))


def test_analytic_record_of_eigenstate_rotates_phase(line_grid):
    x = line_grid.axis(0)
    phi = oscillator_eigenfunction(x, 1)
    record = analytic_record(line_grid, [(1.0, phi, 1.5)], dt=0.1, steps=10)
    assert isinstance(record, EvolutionRecord)
    assert len(record.snapshots) == 11
    assert record.times[-1] == pytest.approx(1.0)
    assert record.norm_drift() < 1e-12
    start = ComplexField(grid=line_grid, values=phi)
    assert inner_product(start, record.final) == pytest.approx(np.exp(-1.5j), abs=1e-10)


def test_ho2d_evolution_is_analytic():
    scenario = build('ho2d_superposition', {'steps': 20})
    record = scenario.evolve()
    assert len(record.snapshots) == 21
    assert_allclose(record.snapshots[0].values, scenario.initial_state().values, atol=1e-14)
    assert record.norms[0] == pytest.approx(1.0, abs=1e-8)


def test_pair_scenario_evolves_both_states():
    pair = build('noQ_divergence_pair', {'steps': 10}).evolve()
    assert isinstance(pair, PairRecord)
    assert len(pair.divergence) == 11


def _assert_passed(report):
    failures = [(c.check, c.measured, c.threshold, c.detail) for c in report.failures()]
    assert report.passed, failures


def test_ho_ground_acceptance():
    report = run_acceptance(build('ho_ground'))
    _assert_passed(report)
    checks = {c.check for c in report.checks}
    assert {'qv_flatness', 'qv_constant', 'net_force', 'velocity', 'norm_drift', 'static_trajectory'} <= checks
    assert report.runtime > 0


def test_ho_excited_acceptance():
    report = run_acceptance(build('ho_excited'))
    _assert_passed(report)
    node = [c for c in report.checks if c.check == 'node_masked'][0]
    assert node.measured == 1.0


def test_hydrogen_acceptance():
    _assert_passed(run_acceptance(build('hydrogen_radial')))


def test_free_gaussian_acceptance():
    report = run_acceptance(build('free_gaussian'))
    _assert_passed(report)
    slope = [c for c in report.checks if c.check == 'separation_slope'][0]
    assert slope.relation == 'info'


def test_errors_become_failed_checks():
    report = run_acceptance(build('ho_ground', {'trajectory_start': 25.0, 'steps': 10}))
    assert not report.passed
    failed = report.failures()
    assert [c.check for c in failed] == ['error']
    assert np.isnan(failed[0].measured)
    assert 'qv_flatness' in {c.check for c in report.checks}


@pytest.mark.slow
@pytest.mark.parametrize('name', ['ho_coherent', 'two_particle_cm_planewave', 'noQ_divergence_pair'])
def test_grid_acceptance(name):
    _assert_passed(run_acceptance(build(name)))


@pytest.mark.slow
def test_ho2d_reports_slopes_only():
    report = run_acceptance(build('ho2d_superposition'))
    assert report.passed
    assert {c.relation for c in report.checks} == {'info'}
    assert {c.check for c in report.checks} == {'slope_full', 'slope_early', 'slope_late'}


@pytest.mark.slow
def test_toy_sweep_acceptance():
    report = run_acceptance(build('toy_chaos_sweep', {'workers': 2}))
    _assert_passed(report)
    assert {'refinement_g0', 'refinement_g2', 'linear_exponents', 'diagonal_spectrum'} <= {c.check for c in report.checks}


@pytest.mark.slow
def test_pair_scenario_reports_galerkin_deviation():
    report = run_acceptance(build('noQ_divergence_pair', {'steps': 50, 'galerkin_steps': 20}))
    deviation = [c for c in report.checks if c.check == 'galerkin_deviation'][0]
    assert deviation.relation == 'info'
    assert np.isfinite(deviation.measured)

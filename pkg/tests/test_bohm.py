"""Tests for the quantum potential, forces, guidance velocity and trajectories."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.bohm import (
    Trajectory,
    bohm_velocity,
    classical_force,
    force_balance_report,
    integrate_trajectory,
    interior_mask,
    newton_residual,
    quantum_force,
    quantum_potential,
    sample_starts,
    trajectory_batch,
    trajectory_separation,
    validate_snapshot_stride,
)
from src.dynamics import EvolverConfig, evolve_tdse
from src.field_core import ComplexField, SpatialGrid
from src.scenarios import free_gaussian_width, gaussian_packet


@pytest.fixture
def spreading_record(gaussian, free_particle):
    """Free packet with k0 = 1 recorded every step up to t = 1."""
    return evolve_tdse(gaussian, free_particle, EvolverConfig(dt=0.01), 100)


def test_ground_state_quantum_potential_balances_oscillator(ho_ground, oscillator):
    qpf = quantum_potential(ho_ground, oscillator)
    V = oscillator.potential_on(ho_ground.grid)
    keep = interior_mask(ho_ground) & ~qpf.node_mask
    assert_allclose((qpf.Q.values + V)[keep], 0.5, atol=1e-8)
    assert np.all(qpf.Q.values[qpf.node_mask] == 0.0)
    assert 0.0 < qpf.mask_fraction < 1.0


def test_quantum_potential_ignores_normalization(gaussian, free_particle):
    scaled = ComplexField(grid=gaussian.grid, values=(3.0 - 2.0j) * gaussian.values)
    a = quantum_potential(gaussian, free_particle)
    b = quantum_potential(scaled, free_particle)
    assert np.array_equal(a.node_mask, b.node_mask)
    keep = interior_mask(gaussian)
    assert_allclose(a.Q.values[keep], b.Q.values[keep], atol=1e-9)


def test_dirichlet_boundary_is_masked(box_grid, oscillator):
    x = box_grid.axis(0)
    psi = ComplexField(grid=box_grid, values=np.cos(np.pi * x / 20.0))
    qpf = quantum_potential(psi, oscillator)
    assert qpf.node_mask[0] and qpf.node_mask[-1]
    assert not qpf.node_mask[200]


def test_fully_masked_field_warns(line_grid, free_particle, caplog):
    psi = ComplexField(grid=line_grid, values=np.zeros(line_grid.shape))
    qpf = quantum_potential(psi, free_particle)
    assert qpf.mask_fraction == 1.0
    assert 'fully node-masked' in caplog.text


def test_ground_state_forces_cancel(ho_ground, oscillator):
    report = force_balance_report(ho_ground, oscillator)
    assert report.max_net_force < 1e-6
    assert abs(report.ensemble_average[0][0]) < 1e-10
    assert report.pair_max is None
    assert set(report.summary()) == {'mask_fraction', 'max_net_force', 'avg_force_0_0'}


def test_quantum_force_masks_neighbors_of_nodes(line_grid, free_particle):
    x = line_grid.axis(0)
    psi = ComplexField(grid=line_grid, values=x * np.exp(-x ** 2 / 2))
    qpf = quantum_potential(psi, free_particle)
    force = quantum_force(qpf, 0)
    assert qpf.node_mask[128]
    assert force.mask[127] and force.mask[128] and force.mask[129]
    assert force.components[0][127] == 0.0
    with pytest.raises(ValueError):
        quantum_force(qpf, 1)


def test_classical_force_of_oscillator(line_grid, oscillator):
    force = classical_force(oscillator, line_grid, 0)
    assert_allclose(force.components[0], -line_grid.axis(0), atol=1e-10)


def test_quantum_force_averages_to_zero(gaussian, free_particle):
    report = force_balance_report(gaussian, free_particle)
    assert abs(report.ensemble_average[0][0]) < 1e-10


def test_velocity_of_moving_packet(gaussian, free_particle):
    v = bohm_velocity(gaussian, free_particle, 0)
    keep = interior_mask(gaussian) & v.valid()
    assert_allclose(v.components[0][keep], 1.0, atol=1e-8)
    assert np.all(v.components[0][v.mask] == 0.0)


def test_velocity_vanishes_for_real_state(ho_ground, oscillator):
    v = bohm_velocity(ho_ground, oscillator, 0)
    assert np.max(np.abs(v.components[0][interior_mask(ho_ground)])) < 1e-10


def test_trajectory_follows_spreading_packet(spreading_record, free_particle):
    traj = integrate_trajectory(spreading_record, [0.5], free_particle)
    assert not traj.truncated
    assert not traj.touched_node
    assert len(traj.times) == 101
    # x(t) = k0 t + x0 sigma(t) / sigma0
    expected = traj.times + 0.5 * free_gaussian_width(traj.times, 1.0)
    assert_allclose(traj.positions[:, 0], expected, atol=1e-3)
    assert_allclose(traj.momenta[0], [1.0], atol=1e-6)


def test_substeps_refine_the_path(spreading_record, free_particle):
    traj = integrate_trajectory(spreading_record, [0.5], free_particle, substeps=4)
    assert len(traj.times) == 401
    assert traj.positions[-1, 0] == pytest.approx(1.0 + 0.5 * free_gaussian_width(1.0, 1.0), abs=1e-3)


def test_newton_residual_along_trajectory(spreading_record, free_particle):
    traj = integrate_trajectory(spreading_record, [0.5], free_particle)
    residual = newton_residual(traj, spreading_record, free_particle)
    assert residual.shape == (101,)
    assert np.max(residual) < 1e-2


def test_trajectory_start_must_lie_on_grid(spreading_record, free_particle):
    with pytest.raises(ValueError):
        integrate_trajectory(spreading_record, [25.0], free_particle)
    with pytest.raises(ValueError):
        integrate_trajectory(spreading_record, [0.0, 0.0], free_particle)
    with pytest.raises(ValueError):
        integrate_trajectory(spreading_record, [0.0], free_particle, substeps=0)


def test_trajectory_leaving_grid_is_truncated(free_particle):
    grid = SpatialGrid(points=(128,), lower=(-8.0,), upper=(8.0,))
    k0 = 2 * np.pi * 10 / 16.0
    psi = ComplexField(grid=grid, values=gaussian_packet(grid.axis(0), sigma=1.0, k0=k0))
    record = evolve_tdse(psi, free_particle, EvolverConfig(dt=0.01), 100)
    traj = integrate_trajectory(record, [7.0], free_particle)
    assert traj.truncated
    assert len(traj.times) < 101
    assert traj.positions[-1, 0] <= 8.0


def test_sparse_snapshots_are_rejected(gaussian, free_particle, spreading_record):
    validate_snapshot_stride(spreading_record, free_particle)
    sparse = evolve_tdse(gaussian, free_particle, EvolverConfig(dt=0.01, record_stride=100), 100)
    with pytest.raises(ValueError, match='record_stride'):
        validate_snapshot_stride(sparse, free_particle)


def test_separation_grows_with_packet_width(spreading_record, free_particle):
    result = trajectory_separation(spreading_record, [0.5], [0.501], free_particle)
    assert result.reliable
    growth = result.log_separation[-1] - result.log_separation[0]
    assert growth == pytest.approx(np.log(free_gaussian_width(1.0, 1.0)), abs=1e-3)
    assert result.slope > 0
    assert result.window == (0.0, pytest.approx(1.0))


def test_separation_requires_nearby_starts(spreading_record, free_particle):
    with pytest.raises(ValueError):
        trajectory_separation(spreading_record, [0.0], [3.0], free_particle)


def test_sample_starts_are_seeded(gaussian):
    a = sample_starts(gaussian, 2000, seed=3)
    b = sample_starts(gaussian, 2000, seed=3)
    assert a.shape == (2000, 1)
    assert np.array_equal(a, b)
    assert abs(np.mean(a)) < 0.1
    assert np.std(a) == pytest.approx(1.0, abs=0.1)


def test_batch_keeps_start_order(spreading_record, free_particle):
    starts = [[-0.5], [0.0], [0.5]]
    batch = trajectory_batch(spreading_record, free_particle, starts=starts, workers=3)
    assert [t.positions[0, 0] for t in batch] == [-0.5, 0.0, 0.5]
    single = integrate_trajectory(spreading_record, [0.5], free_particle)
    assert_allclose(batch[2].positions, single.positions, atol=1e-12)


def test_batch_samples_when_no_starts(spreading_record, free_particle):
    batch = trajectory_batch(spreading_record, free_particle, count=4, seed=11)
    assert len(batch) == 4


def test_total_momentum_needs_equal_dims():
    traj = Trajectory(times=np.array([0.0, 1.0]), positions=np.zeros((2, 3)), momenta=np.ones((2, 3)),
                      node_flags=np.zeros(2, dtype=bool), dims=(1, 2))
    with pytest.raises(ValueError):
        traj.total_momentum()
    assert traj.particle_positions(1).shape == (2, 2)

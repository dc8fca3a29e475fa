"""Tests for bases, Galerkin generators, coefficient flows and Lyapunov spectra."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from src.dynamics import EvolverConfig
from src.errors import NumericalAbort
from src.field_core import ComplexField, ParticleSystem, SpatialGrid
from src.flow import (
    BasisSet,
    CoefficientState,
    Generator,
    GeneratorKind,
    RealFlow,
    default_energies,
    galerkin_consistency,
    galerkin_project,
    hamiltonian_operator,
    integrate_flow,
    linear_real_flow,
    lyapunov_spectrum,
    lyapunov_sweep,
    macroscopic_series,
    noQ_flow_generator,
    order_parameter,
    oscillator_basis,
    plane_wave_basis,
    refinement_consistent,
    to_complex,
    to_real,
    toy_nonlinear_generator,
)
from src.scenarios import DEFAULTS

CHAOS_LIMIT = 1e-3


@pytest.fixture
def wide_grid():
    return SpatialGrid(points=(256,), lower=(-10.0,), upper=(10.0,))


@pytest.fixture
def toy_state():
    a = np.array([1.0, 0.5 + 0.2j, 0.3j, -0.1 + 0.1j])
    return CoefficientState(a=a / np.linalg.norm(a))


def test_real_layout_is_interleaved():
    a = np.array([1 + 2j, 3 - 4j])
    assert to_real(a).tolist() == [1.0, 2.0, 3.0, -4.0]
    assert np.array_equal(to_complex(to_real(a)), a)


def test_coefficients_must_be_finite():
    with pytest.raises(ValidationError):
        CoefficientState(a=np.array([1.0, np.nan]))
    assert CoefficientState(a=[3.0, 4.0]).norm == pytest.approx(5.0)


def test_oscillator_basis_is_orthonormal(wide_grid):
    basis = oscillator_basis(wide_grid, 6)
    assert basis.N == 6
    assert basis.residual < 1e-10


def test_non_orthonormal_fields_are_rejected(wide_grid):
    x = wide_grid.axis(0)
    f = ComplexField(grid=wide_grid, values=np.exp(-x ** 2))
    g = ComplexField(grid=wide_grid, values=np.exp(-(x - 0.5) ** 2))
    with pytest.raises(ValueError, match='orthonormal'):
        BasisSet.from_fields([f, g])


def test_project_inverts_reconstruct(wide_grid):
    basis = oscillator_basis(wide_grid, 4)
    a = np.array([0.5, -0.2j, 0.1 + 0.3j, 0.7])
    assert_allclose(basis.project(basis.reconstruct(a)), a, atol=1e-10)


def test_label_only_basis_has_no_grid():
    basis = BasisSet(N=3)
    with pytest.raises(ValueError):
        basis.grid


def test_galerkin_oscillator_is_diagonal(wide_grid):
    sys = ParticleSystem(masses=(1.0,), dims=(1,), potential=lambda c, t: 0.5 * c[0] ** 2)
    gen = galerkin_project(hamiltonian_operator(sys), oscillator_basis(wide_grid, 5), sys)
    assert gen.kind == GeneratorKind.CONSTANT
    H = gen.hamiltonian(np.zeros(5))
    assert_allclose(H, np.diag([0.5, 1.5, 2.5, 3.5, 4.5]), atol=1e-8)
    assert gen.anti_hermitian_residual() < 1e-10


def test_galerkin_plane_waves_give_kinetic_energies():
    grid = SpatialGrid(points=(64,), lower=(0.0,), upper=(2 * np.pi,))
    sys = ParticleSystem(masses=(2.0,), dims=(1,), hbar=0.5)
    gen = galerkin_project(hamiltonian_operator(sys), plane_wave_basis(grid, [-1, 0, 2]), sys)
    # hbar^2 k^2 / 2m
    expected = np.diag([1.0, 0.0, 4.0]) * 0.25 / 4.0
    assert_allclose(gen.hamiltonian(np.zeros(3)), expected, atol=1e-12)


def test_plane_wave_basis_needs_periodic_line(box_grid):
    with pytest.raises(ValueError):
        plane_wave_basis(box_grid, [0, 1])


def test_constant_generator_needs_matrix():
    with pytest.raises(ValidationError):
        Generator(kind=GeneratorKind.CONSTANT, N=2)
    with pytest.raises(ValidationError):
        Generator(kind=GeneratorKind.STATE_DEPENDENT, N=2)


def test_default_energies():
    assert default_energies(4) == pytest.approx([0.0, 1.0, 1.0 + np.sqrt(2.0), 2.0 + np.sqrt(3.0)])


def test_toy_generator_is_anti_hermitian(toy_state):
    gen = toy_nonlinear_generator(4, 1.5, default_energies(4))
    assert gen.kind == GeneratorKind.STATE_DEPENDENT
    assert gen.anti_hermitian_residual(toy_state.a) < 1e-12
    H = gen.hamiltonian(toy_state.a)
    delta = order_parameter(toy_state.a)
    assert H[0, 1] == pytest.approx(1.5 * delta)
    assert H[1, 0] == pytest.approx(1.5 * np.conj(delta))


def test_toy_generator_without_coupling_is_constant():
    gen = toy_nonlinear_generator(3, 0.0, [0.0, 1.0, 2.5])
    assert gen.kind == GeneratorKind.CONSTANT
    with pytest.raises(ValueError):
        toy_nonlinear_generator(2, 1.0, [0.0, 1.0])
    with pytest.raises(ValueError):
        toy_nonlinear_generator(3, 1.0, [0.0, 1.0])


def test_analytic_jacobian_matches_finite_differences(toy_state):
    gen = toy_nonlinear_generator(4, 0.8, default_energies(4))
    analytic = gen.real_flow()
    numeric = RealFlow(dim=8, rhs=analytic.rhs)
    x = to_real(toy_state.a)
    assert_allclose(analytic.jacobian_at(x), numeric.jacobian_at(x), atol=1e-7)


def test_toy_flow_conserves_norm(toy_state):
    gen = toy_nonlinear_generator(4, 1.0, default_energies(4))
    states = integrate_flow(gen, toy_state, dt=0.01, steps=1000, record_stride=100)
    assert len(states) == 11
    assert states[-1].t == pytest.approx(10.0)
    assert abs(states[-1].norm - 1.0) < 1e-6
    series = macroscopic_series(gen, states)
    assert series['order_parameter'].shape == (11,)


def test_integrate_flow_checks_shapes(toy_state):
    gen = toy_nonlinear_generator(3, 1.0, [0.0, 1.0, 2.5])
    with pytest.raises(ValueError):
        integrate_flow(gen, toy_state, dt=0.01, steps=10)
    with pytest.raises(ValueError):
        integrate_flow(gen, CoefficientState(a=[1.0, 0.0, 0.0]), dt=0.0, steps=10)


def test_runaway_flow_aborts():
    gen = Generator(kind=GeneratorKind.CONSTANT, N=2, matrix=np.diag([50.0, 0.0]))
    with np.errstate(all='ignore'):
        with pytest.raises(NumericalAbort):
            integrate_flow(gen, CoefficientState(a=[1.0, 1.0]), dt=1.0, steps=500)


def test_diagonal_flow_spectrum():
    rates = [0.3, 0.1, -0.2, -0.5]
    flow = linear_real_flow(np.diag(rates))
    result = lyapunov_spectrum(flow, np.ones(4), dt=0.01, steps=2000, renorm_stride=5)
    assert_allclose(result.spectrum, rates, atol=1e-8)
    assert result.largest == pytest.approx(0.3)
    assert result.transient_steps == 200
    assert result.span == pytest.approx(18.0)
    assert result.history.shape == (360, 4)


def test_spectrum_sum_matches_trace():
    rng = np.random.default_rng(5)
    A = 0.3 * rng.standard_normal((4, 4))
    result = lyapunov_spectrum(linear_real_flow(A), rng.standard_normal(4), dt=0.01, steps=3000)
    assert np.sum(result.spectrum) == pytest.approx(np.trace(A), abs=1e-6)
    assert np.all(np.diff(result.spectrum) <= 0)


def test_rotation_has_zero_exponents():
    flow = linear_real_flow(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    result = lyapunov_spectrum(flow, np.array([1.0, 0.0]), dt=0.01, steps=5000, renorm_stride=10)
    assert np.max(np.abs(result.spectrum)) < 1e-3


def test_unitary_generator_has_vanishing_spectrum(toy_state):
    gen = toy_nonlinear_generator(4, 0.0, default_energies(4))
    result = lyapunov_spectrum(gen, toy_state, dt=0.02, steps=2000, renorm_stride=5)
    assert result.spectrum.shape == (8,)
    assert np.max(np.abs(result.spectrum)) < 1e-4


def test_nonlinear_spectrum_is_finite_and_sorted(toy_state):
    gen = toy_nonlinear_generator(4, 2.0, default_energies(4))
    result = lyapunov_spectrum(gen, toy_state, dt=0.02, steps=500, renorm_stride=5)
    assert np.all(np.isfinite(result.spectrum))
    assert np.all(np.diff(result.spectrum) <= 0)
    assert len(result.history_times) == len(result.history)


def test_lyapunov_argument_checks(toy_state):
    flow = linear_real_flow(np.eye(2))
    with pytest.raises(ValueError):
        lyapunov_spectrum(flow, np.zeros(3), dt=0.01, steps=10)
    with pytest.raises(ValueError):
        lyapunov_spectrum(flow, np.zeros(2), dt=0.01, steps=10, renorm_stride=20)
    with pytest.raises(ValueError):
        lyapunov_spectrum(flow, np.zeros(2), dt=0.01, steps=10, transient_fraction=1.0)


def test_refinement_consistency_rule():
    assert refinement_consistent([0.01, -0.02, 0.03])
    assert refinement_consistent([0.2, 0.25, 0.15])
    assert not refinement_consistent([0.2, 0.5, 0.2])
    assert not refinement_consistent([0.2, -0.2, 0.2])


def test_sweep_reports_each_parameter(toy_state):
    energies = default_energies(4)
    entries = lyapunov_sweep(lambda g: toy_nonlinear_generator(4, g, energies), [0.0, 0.5], toy_state,
                             dt=0.02, steps=400, renorm_stride=5, workers=2)
    assert [e.parameter for e in entries] == [0.0, 0.5]
    zero = entries[0]
    assert abs(zero.largest) < CHAOS_LIMIT
    assert zero.consistent
    assert not zero.chaotic


def test_noQ_generator_matches_linear_for_single_plane_wave():
    grid = SpatialGrid(points=(64,), lower=(0.0,), upper=(2 * np.pi,))
    sys = ParticleSystem(masses=(1.0,), dims=(1,))
    basis = plane_wave_basis(grid, [0, 1, 2])
    gen = noQ_flow_generator(basis, sys)
    linear = galerkin_project(hamiltonian_operator(sys), basis, sys)
    a = np.array([0.0, 1.0, 0.0], dtype=complex)
    assert_allclose(gen.M(a), linear.matrix, atol=1e-10)
    mixed = np.array([1.0, 0.3, 0.1j])
    assert gen.anti_hermitian_residual(mixed) < 1e-9
    assert np.max(np.abs(gen.M(mixed) - linear.matrix)) > 1e-3



def test_two_level_coupling_gives_rabi_oscillation():
    g = 0.7
    gen = Generator(kind=GeneratorKind.CONSTANT, N=2, matrix=np.array([[0.0, g], [g, 0.0]]) / 1j)
    t_end = np.pi / (2 * g)
    states = integrate_flow(gen, CoefficientState(a=[1.0, 0.0]), dt=t_end / 2000, steps=2000, record_stride=100)
    for s in states:
        assert abs(s.a[0]) ** 2 == pytest.approx(np.cos(g * s.t) ** 2, abs=1e-6)
    final = states[-1]
    assert final.t == pytest.approx(t_end)
    assert abs(final.a[0]) ** 2 < 1e-6
    assert abs(final.a[1]) ** 2 == pytest.approx(1.0, abs=1e-6)


def test_decoupled_modes_rotate_with_their_energies():
    energies = np.array([0.0, 1.0, 2.5])
    gen = toy_nonlinear_generator(3, 0.0, energies)
    a0 = np.array([1.0, 0.5j, -0.3])
    a0 = a0 / np.linalg.norm(a0)
    for s in integrate_flow(gen, CoefficientState(a=a0), dt=0.005, steps=1000, record_stride=250):
        assert_allclose(s.a, a0 * np.exp(-1j * energies * s.t), atol=1e-8)


def test_order_parameter_feedback_separates_from_frozen_generator(toy_state):
    coupled = toy_nonlinear_generator(4, 2.0, default_energies(4))
    frozen = Generator(kind=GeneratorKind.CONSTANT, N=4, matrix=coupled.M(toy_state.a))
    live = integrate_flow(coupled, toy_state, dt=0.01, steps=500, record_stride=500)[-1]
    fixed = integrate_flow(frozen, toy_state, dt=0.01, steps=500, record_stride=500)[-1]
    assert np.max(np.abs(live.a - fixed.a)) > 0.05

    free = toy_nonlinear_generator(4, 0.0, default_energies(4))
    still = Generator(kind=GeneratorKind.CONSTANT, N=4, matrix=free.M(toy_state.a))
    a = integrate_flow(free, toy_state, dt=0.01, steps=500, record_stride=500)[-1]
    b = integrate_flow(still, toy_state, dt=0.01, steps=500, record_stride=500)[-1]
    assert_allclose(a.a, b.a, atol=1e-12)


@pytest.mark.slow
def test_largest_exponent_insensitive_to_renorm_stride():
    p = DEFAULTS['toy_chaos_sweep']
    a0 = np.asarray(p['a0_re']) + 1j * np.asarray(p['a0_im'])
    start = CoefficientState(a=a0 / np.linalg.norm(a0))
    gen = toy_nonlinear_generator(4, 2.0, default_energies(4))
    largest = [lyapunov_spectrum(gen, start, dt=0.02, steps=4000, renorm_stride=k).largest for k in (1, 5, 10)]
    assert min(largest) > CHAOS_LIMIT
    assert max(largest) <= 2.0 * min(largest)


def test_noQ_generator_tracks_projected_grid_evolution(wide_grid, oscillator):
    basis = oscillator_basis(wide_grid, 24)
    a0 = np.zeros(24, dtype=complex)
    a0[:2] = [1.0, 0.2j]
    psi0 = basis.reconstruct(a0 / np.linalg.norm(a0))
    deviation = galerkin_consistency(basis, oscillator, psi0, EvolverConfig(dt=0.002, record_stride=10), 100)
    assert deviation.shape == (11,)
    assert deviation[0] < 1e-10
    assert np.max(deviation) < 1e-3


def test_galerkin_consistency_needs_matching_grids(wide_grid, line_grid, oscillator):
    basis = oscillator_basis(wide_grid, 4)
    psi = ComplexField(grid=line_grid, values=np.exp(-line_grid.axis(0) ** 2))
    with pytest.raises(ValueError, match='different grids'):
        galerkin_consistency(basis, oscillator, psi, EvolverConfig(dt=0.01), 5)

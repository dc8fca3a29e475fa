"""Scenario catalog: grids, systems, initial states, analytic references and acceptance checks."""

import logging
import time
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .bohm import (
    bohm_velocity,
    force_balance_report,
    integrate_trajectory,
    interior_mask,
    classical_force,
    newton_residual,
    quantum_force,
    quantum_potential,
    trajectory_batch,
    trajectory_separation,
    validate_snapshot_stride,
)
from .dynamics import (
    EvolutionRecord,
    EvolverConfig,
    Flow,
    Scheme,
    continuity_residual,
    evolve_noQ,
    evolve_pair,
    evolve_tdse,
    hermiticity_defect,
)
from .errors import BohmflowError
from .field_core import Boundary, ComplexField, ParticleSystem, SpatialGrid, inner_values, normalized
from .flow import (
    CoefficientState,
    default_energies,
    galerkin_consistency,
    galerkin_project,
    hamiltonian_operator,
    linear_real_flow,
    lyapunov_spectrum,
    lyapunov_sweep,
    oscillator_basis,
    oscillator_eigenfunction,
    toy_nonlinear_generator,
)

logger = logging.getLogger(__name__)


class Scenario(BaseModel):
    """An immutable, fully parameterized experiment."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    description: str
    params: Dict[str, Any] = Field(default_factory=dict, description="Resolved catalog parameters")
    grid: Optional[SpatialGrid] = None
    system: Optional[ParticleSystem] = None
    evolver: Optional[EvolverConfig] = None
    steps: int = Field(0, ge=0)
    flow: Flow = Flow.TDSE
    reference: Dict[str, float] = Field(default_factory=dict, description="Closed-form constants")
    thresholds: Dict[str, float] = Field(default_factory=dict)
    initial: Optional[Callable[[], ComplexField]] = None
    partner: Optional[Callable[[], ComplexField]] = Field(None, description="Second initial state of a pair")
    analytic: Optional[Callable[[], EvolutionRecord]] = Field(None, description="Closed-form evolution")

    def initial_state(self) -> ComplexField:
        if self.initial is None:
            raise ValueError(f'scenario {self.name!r} has no grid-backed initial state')
        return self.initial()

    def partner_state(self) -> ComplexField:
        if self.partner is None:
            raise ValueError(f'scenario {self.name!r} has no partner state')
        return self.partner()

    def evolve(self):
        """Run the scenario's own evolution; pair scenarios return a PairRecord."""
        if self.analytic is not None:
            return self.analytic()
        if self.evolver is None:
            raise ValueError(f'scenario {self.name!r} has no evolution')
        if self.partner is not None:
            return evolve_pair(self.initial_state(), self.partner_state(), self.system,
                               self.evolver, self.steps, flow=self.flow)
        if self.flow == Flow.TDSE:
            return evolve_tdse(self.initial_state(), self.system, self.evolver, self.steps)
        return evolve_noQ(self.initial_state(), self.system, self.evolver, self.steps,
                          include_nonlinear=self.flow == Flow.NO_Q)


class CheckResult(BaseModel):
    """One measured quantity against its threshold."""
    model_config = ConfigDict(frozen=True)

    scenario: str
    check: str
    measured: float
    threshold: Optional[float] = None
    relation: str = Field('<', description="'<', '>' or 'info'")
    passed: bool
    detail: str = ""


class AcceptanceReport(BaseModel):
    """Pass/fail entries for one scenario."""
    model_config = ConfigDict(frozen=True)

    scenario: str
    checks: Tuple[CheckResult, ...]
    runtime: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]


class _Checks:
    """Collects check results for one scenario."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.results: List[CheckResult] = []

    def below(self, key: str, value: float, detail: str = "") -> None:
        limit = self.scenario.thresholds[key]
        self._add(key, value, limit, '<', bool(np.isfinite(value) and value < limit), detail)

    def above(self, key: str, value: float, limit: float, detail: str = "") -> None:
        self._add(key, value, limit, '>', bool(np.isfinite(value) and value > limit), detail)

    def info(self, key: str, value: float, detail: str = "") -> None:
        self._add(key, value, None, 'info', True, detail)

    def fail(self, key: str, detail: str) -> None:
        self._add(key, float('nan'), self.scenario.thresholds.get(key), '<', False, detail)

    def _add(self, key, value, limit, relation, passed, detail):
        self.results.append(CheckResult(scenario=self.scenario.name, check=key, measured=float(value),
                                        threshold=limit, relation=relation, passed=passed, detail=detail))


def _periodic_line(points: int, extent: float) -> SpatialGrid:
    return SpatialGrid(points=(points,), lower=(-extent,), upper=(extent,), boundary=Boundary.PERIODIC)


def _harmonic(mass: float, omega: float) -> Callable:
    def potential(coords, t):
        return 0.5 * mass * omega ** 2 * sum(c ** 2 for c in coords)
    return potential


def gaussian_packet(x: np.ndarray, sigma: float, center: float = 0.0, k0: float = 0.0,
                    chirp: float = 0.0) -> np.ndarray:
    """(2 pi sigma^2)^(-1/4) exp(-(x-c)^2 / 4 sigma^2 + i k0 x + i chirp (x-c)^2 / 2)."""
    shift = x - center
    return (2.0 * np.pi * sigma ** 2) ** -0.25 * np.exp(-shift ** 2 / (4.0 * sigma ** 2)
                                                      + 1j * k0 * x + 0.5j * chirp * shift ** 2)


def free_gaussian_width(t, sigma0: float, mass: float = 1.0, hbar: float = 1.0):
    """sigma(t) = sigma0 sqrt(1 + (hbar t / 2 m sigma0^2)^2)."""
    tau = hbar * np.asarray(t) / (2.0 * mass * sigma0 ** 2)
    return sigma0 * np.sqrt(1.0 + tau ** 2)


def analytic_record(grid: SpatialGrid, components: Sequence[Tuple[complex, np.ndarray, float]],
                    dt: float, steps: int, hbar: float = 1.0, name: str = "psi") -> EvolutionRecord:
    """Record of sum_k c_k phi_k exp(-i E_k t / hbar) sampled every dt."""
    snapshots, norms, energies = [], [], []
    weights = sum(abs(c) ** 2 for c, _, _ in components)
    mean_energy = sum(abs(c) ** 2 * E for c, _, E in components) / weights
    times = [n * dt for n in range(steps + 1)]
    for t in times:
        values = sum(c * phi * np.exp(-1j * E * t / hbar) for c, phi, E in components)
        snapshots.append(ComplexField(grid=grid, values=values, name=name))
        norms.append(float(np.sqrt(inner_values(values, values, grid).real)))
        energies.append(mean_energy)
    return EvolutionRecord(
        flow=Flow.TDSE, dt=dt, record_stride=1, steps=tuple(range(steps + 1)), times=tuple(times),
        snapshots=tuple(snapshots), norms=tuple(norms), energies=tuple(energies),
        mask_fractions=tuple(0.0 for _ in times), step_norms=tuple(norms),
    )


def _ho_ground(p: Dict[str, Any]) -> Scenario:
    grid = _periodic_line(p['points'], p['extent'])
    system = ParticleSystem(masses=(p['mass'],), dims=(1,), hbar=p['hbar'],
                            potential=_harmonic(p['mass'], p['omega']))

    def initial():
        values = oscillator_eigenfunction(grid.axis(0), 0, p['mass'], p['omega'], p['hbar'])
        return ComplexField(grid=grid, values=values, name="psi")

    return Scenario(
        name="ho_ground", description="Harmonic oscillator ground state (stationary)", params=p,
        grid=grid, system=system, evolver=EvolverConfig(dt=p['dt']), steps=p['steps'],
        reference={'energy': 0.5 * p['hbar'] * p['omega']},
        thresholds={'qv_flatness': 1e-4, 'qv_constant': 1e-4, 'net_force': 1e-4, 'velocity': 1e-10,
                    'static_trajectory': 1e-4, 'norm_drift': 1e-10},
        initial=initial,
    )


def _check_stationary(scenario: Scenario, checks: _Checks, flatness_key: str, constant_key: str) -> None:
    psi = scenario.initial_state()
    qpf = quantum_potential(psi, scenario.system)
    V = scenario.system.potential_on(psi.grid)
    keep = interior_mask(psi) & ~qpf.node_mask
    total = (qpf.Q.values + V)[keep]
    mean = float(np.mean(total))
    checks.below(flatness_key, float(np.std(total) / abs(mean)), f"mean Q+V = {mean!r}")
    energy = scenario.reference['energy']
    checks.below(constant_key, abs(mean - energy) / abs(energy), f"expected {energy!r}")
    v = bohm_velocity(psi, scenario.system, 0)
    checks.below('velocity', float(np.max(np.abs(v.components[0])[keep])))


def _ho_ground_checks(scenario: Scenario, checks: _Checks) -> None:
    _check_stationary(scenario, checks, 'qv_flatness', 'qv_constant')
    report = force_balance_report(scenario.initial_state(), scenario.system)
    checks.below('net_force', report.max_net_force)
    record = scenario.evolve()
    checks.below('norm_drift', record.norm_drift())
    x0 = scenario.params['trajectory_start']
    traj = integrate_trajectory(record, [x0], scenario.system)
    checks.below('static_trajectory', float(np.max(np.abs(traj.positions[:, 0] - x0))))


def _ho_excited(p: Dict[str, Any]) -> Scenario:
    grid = SpatialGrid(points=(p['points'],), lower=(-p['extent'],), upper=(p['extent'],),
                       boundary=Boundary.DIRICHLET)
    system = ParticleSystem(masses=(p['mass'],), dims=(1,), hbar=p['hbar'],
                            potential=_harmonic(p['mass'], p['omega']))

    def initial():
        values = oscillator_eigenfunction(grid.axis(0), 1, p['mass'], p['omega'], p['hbar'])
        return ComplexField(grid=grid, values=values, name="psi")

    return Scenario(
        name="ho_excited", description="First excited oscillator state with a node on the grid", params=p,
        grid=grid, system=system, evolver=EvolverConfig(dt=p['dt'], scheme=Scheme.CRANK_NICOLSON),
        steps=p['steps'],
        reference={'energy': 1.5 * p['hbar'] * p['omega']},
        thresholds={'qv_flatness': 5e-3, 'qv_constant': 1e-3, 'velocity': 1e-10, 'node_masked': 0.5},
        initial=initial,
    )


def _ho_excited_checks(scenario: Scenario, checks: _Checks) -> None:
    _check_stationary(scenario, checks, 'qv_flatness', 'qv_constant')
    psi = scenario.initial_state()
    qpf = quantum_potential(psi, scenario.system)
    center = int(np.argmin(np.abs(psi.grid.axis(0))))
    checks.above('node_masked', float(qpf.node_mask[center]), scenario.thresholds['node_masked'],
                 "node point carries no Q value")


def _ho_coherent(p: Dict[str, Any]) -> Scenario:
    grid = _periodic_line(p['points'], p['extent'])
    system = ParticleSystem(masses=(p['mass'],), dims=(1,), hbar=p['hbar'],
                            potential=_harmonic(p['mass'], p['omega']))

    def initial():
        values = oscillator_eigenfunction(grid.axis(0), 0, p['mass'], p['omega'], p['hbar'], p['amplitude'])
        return ComplexField(grid=grid, values=values, name="psi")

    return Scenario(
        name="ho_coherent", description="Displaced oscillator ground state (rigid transport)", params=p,
        grid=grid, system=system, evolver=EvolverConfig(dt=p['dt']), steps=p['steps'],
        reference={'amplitude': p['amplitude'], 'period': 2.0 * np.pi / p['omega']},
        thresholds={'rigid_transport': 1e-3, 'newton_residual': 1e-2, 'ensemble_force': 1e-6,
                    'norm_drift': 1e-10},
        initial=initial,
    )


def _ensemble_force_checks(scenario: Scenario, record: EvolutionRecord, checks: _Checks) -> None:
    worst = 0.0
    for t in scenario.params['force_times']:
        j = record.index_at(t)
        report = force_balance_report(record.snapshots[j], scenario.system, record.times[j])
        worst = max(worst, float(np.max(np.abs(report.ensemble_average[0]))))
    checks.below('ensemble_force', worst, f"times {list(scenario.params['force_times'])}")


def _ho_coherent_checks(scenario: Scenario, checks: _Checks) -> None:
    p = scenario.params
    record = scenario.evolve()
    checks.below('norm_drift', record.norm_drift())
    validate_snapshot_stride(record, scenario.system)
    A, omega = p['amplitude'], p['omega']
    starts = [[A + offset] for offset in p['trajectory_offsets']]
    trajectories = trajectory_batch(record, scenario.system, starts=starts, workers=p.get('workers', 1))
    worst = 0.0
    for x0, traj in zip(starts, trajectories):
        expected = x0[0] + A * (np.cos(omega * traj.times) - 1.0)
        worst = max(worst, float(np.max(np.abs(traj.positions[:, 0] - expected))))
    checks.below('rigid_transport', worst, "max |x(t) - x0 - A(cos wt - 1)| over one period")
    residual = newton_residual(trajectories[0], record, scenario.system)
    checks.below('newton_residual', float(np.max(residual)))
    checks.info('continuity_residual', float(np.max(continuity_residual(record, scenario.system))))
    _ensemble_force_checks(scenario, record, checks)


def _free_gaussian(p: Dict[str, Any]) -> Scenario:
    grid = _periodic_line(p['points'], p['extent'])
    system = ParticleSystem(masses=(p['mass'],), dims=(1,), hbar=p['hbar'])

    def initial():
        return ComplexField(grid=grid, values=gaussian_packet(grid.axis(0), p['sigma0'], p['center'], p['k0']))

    return Scenario(
        name="free_gaussian", description="Free spreading Gaussian packet", params=p,
        grid=grid, system=system, evolver=EvolverConfig(dt=p['dt']), steps=p['steps'],
        reference={'sigma0': p['sigma0'], 'sigma_final': float(free_gaussian_width(
            p['dt'] * p['steps'], p['sigma0'], p['mass'], p['hbar']))},
        thresholds={'scaling_law': 1e-3, 'ensemble_force': 1e-6, 'velocity_field': 1e-6, 'norm_drift': 1e-10},
        initial=initial,
    )


def free_gaussian_starts(seed: int, count: int = 5, low: float = 0.5, high: float = 2.5) -> np.ndarray:
    """Seeded starts with |x0| in [low, high] and random sign."""
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=count) * rng.choice([-1.0, 1.0], size=count)


def _free_gaussian_checks(scenario: Scenario, checks: _Checks) -> None:
    p = scenario.params
    sys = scenario.system
    record = scenario.evolve()
    checks.below('norm_drift', record.norm_drift())
    validate_snapshot_stride(record, sys)

    t_end = record.times[-1]
    center = p['center'] + sys.hbar * p['k0'] / sys.masses[0] * t_end
    x = record.grid.axis(0)
    tau = sys.hbar * t_end / (2.0 * sys.masses[0] * p['sigma0'] ** 2)
    rate = (sys.hbar / (2.0 * sys.masses[0] * p['sigma0'] ** 2)) ** 2 * t_end / (1.0 + tau ** 2)
    expected_v = sys.hbar * p['k0'] / sys.masses[0] + (x - center) * rate
    final = record.final
    v = bohm_velocity(final, sys, 0)
    keep = interior_mask(final, 1e-2) & v.valid()
    checks.below('velocity_field', float(np.max(np.abs(v.components[0] - expected_v)[keep])))

    starts = p['center'] + free_gaussian_starts(p['seed'])
    trajectories = trajectory_batch(record, sys, starts=[[s] for s in starts], workers=p.get('workers', 1))
    ratio = free_gaussian_width(t_end, p['sigma0'], sys.masses[0], sys.hbar) / p['sigma0']
    worst = 0.0
    for x0, traj in zip(starts, trajectories):
        expected = center + (x0 - p['center']) * ratio
        worst = max(worst, abs(traj.positions[-1, 0] - expected) / abs(expected))
    checks.below('scaling_law', worst, f"{len(starts)} seeded starts, t = {t_end:g}")
    _ensemble_force_checks(scenario, record, checks)

    sep = trajectory_separation(record, [starts[0]], [starts[0] + 1e-3], sys)
    checks.info('separation_slope', sep.slope, "algebraic growth, slope tends to 0")


def _hydrogen_radial(p: Dict[str, Any]) -> Scenario:
    grid = SpatialGrid(points=(p['points'],), lower=(0.0,), upper=(p['r_max'],), boundary=Boundary.DIRICHLET)
    mu, hbar, e2 = p['mass'], p['hbar'], p['coupling']
    bohr = hbar ** 2 / (mu * e2)

    def coulomb(coords, t):
        r = coords[0]
        return np.where(r > 0, -e2 / np.where(r > 0, r, 1.0), 0.0)

    system = ParticleSystem(masses=(mu,), dims=(1,), hbar=hbar, potential=coulomb)

    def initial():
        r = grid.axis(0)
        # reduced radial function u = r R(r); Q computed from u matches the 3D Q of exp(-r/a)
        return ComplexField(grid=grid, values=2.0 * bohr ** -1.5 * r * np.exp(-r / bohr), name="u")

    return Scenario(
        name="hydrogen_radial", description="Hydrogen-like ground state as a reduced radial problem", params=p,
        grid=grid, system=system, evolver=EvolverConfig(dt=p['dt'], scheme=Scheme.CRANK_NICOLSON),
        steps=p['steps'],
        reference={'bohr_radius': bohr, 'energy': -hbar ** 2 / (2.0 * mu * bohr ** 2)},
        thresholds={'force_balance': 1e-3, 'velocity': 1e-10, 'qv_flatness': 1e-3},
        initial=initial,
    )


def _hydrogen_checks(scenario: Scenario, checks: _Checks) -> None:
    p = scenario.params
    psi = scenario.initial_state()
    sys = scenario.system
    r = psi.grid.axis(0)
    bohr = scenario.reference['bohr_radius']
    window = (r >= p['balance_window'][0] * bohr) & (r <= p['balance_window'][1] * bohr)

    qpf = quantum_potential(psi, sys)
    fq = quantum_force(qpf, 0)
    fc = classical_force(sys, psi.grid, 0)
    keep = window & fq.valid()
    dVdr = -fc.components[0]
    balance = np.abs(fq.components[0] - dVdr)[keep] / np.abs(dVdr)[keep]
    checks.below('force_balance', float(np.max(balance)), "quantum repulsion against Coulomb attraction")

    total = (qpf.Q.values + sys.potential_on(psi.grid))[keep]
    checks.below('qv_flatness', float(np.std(total) / abs(np.mean(total))), f"mean Q+V = {np.mean(total)!r}")
    v = bohm_velocity(psi, sys, 0)
    checks.below('velocity', float(np.max(np.abs(v.components[0]))))


def _two_particle(p: Dict[str, Any]) -> Scenario:
    n, L = p['points'], p['extent']
    grid = SpatialGrid(points=(n, n), lower=(-L, -L), upper=(L, L), boundary=Boundary.PERIODIC)
    system = ParticleSystem(masses=(p['mass'], p['mass']), dims=(1, 1), hbar=p['hbar'])
    period = 2.0 * L
    K = 2.0 * np.pi * p['cm_mode'] / period

    def initial():
        x1, x2 = grid.mesh()
        rel = x1 - x2
        chi = sum(np.exp(-(rel + period * k) ** 2 / (4.0 * p['width'] ** 2)) for k in (-1, 0, 1))
        psi = ComplexField(grid=grid, values=np.exp(1j * K * (x1 + x2)) * chi, name="psi")
        return normalized(psi)

    return Scenario(
        name="two_particle_cm_planewave", description="Two particles, plane-wave centre of mass", params=p,
        grid=grid, system=system, evolver=EvolverConfig(dt=p['dt']), steps=p['steps'],
        reference={'cm_wavenumber': K, 'total_momentum': 2.0 * p['hbar'] * K},
        thresholds={'pair_force': 1e-6, 'total_momentum': 1e-6},
        initial=initial,
    )


def _two_particle_checks(scenario: Scenario, checks: _Checks) -> None:
    p = scenario.params
    psi = scenario.initial_state()
    eps = p['eps_rel'] * float(np.max(np.abs(psi.values)))
    report = force_balance_report(psi, scenario.system, eps_node=eps)
    checks.below('pair_force', report.pair_max, f"mask fraction {report.mask_fraction:.3f}")
    record = scenario.evolve()
    traj = integrate_trajectory(record, p['trajectory_start'], scenario.system)
    P = traj.total_momentum()[:, 0]
    checks.below('total_momentum', float(np.max(np.abs(P - P[0]))),
                 f"P(0) = {P[0]!r}, expected {scenario.reference['total_momentum']!r}")


def _noQ_pair(p: Dict[str, Any]) -> Scenario:
    grid = _periodic_line(p['points'], p['extent'])
    system = ParticleSystem(masses=(p['mass'],), dims=(1,), hbar=p['hbar'])

    def initial():
        return ComplexField(grid=grid, values=gaussian_packet(grid.axis(0), p['sigma'], 0.0, chirp=p['chirp']))

    def partner():
        return ComplexField(grid=grid, values=gaussian_packet(grid.axis(0), p['sigma'], p['offset'],
                                                               chirp=p['chirp']), name="phi")

    return Scenario(
        name="noQ_divergence_pair", description="Nearby chirped packets under the Q-removed flow", params=p,
        grid=grid, system=system, evolver=EvolverConfig(dt=p['dt']), steps=p['steps'], flow=Flow.NO_Q,
        thresholds={'norm_drift': 1e-6, 'tdse_divergence': 1e-8, 'defect_self': 1e-12,
                    'defect_refinement': 1e-3},
        initial=initial, partner=partner,
    )


def _noQ_pair_checks(scenario: Scenario, checks: _Checks) -> None:
    sys = scenario.system
    pair = scenario.evolve()
    drift = pair.norm_drift()
    checks.below('norm_drift', drift)
    checks.above('divergence_growth', pair.divergence_change(), 10.0 * drift,
                 f"D(0) = {pair.divergence[0]!r}, D(end) = {pair.divergence[-1]!r}")
    gap = float(np.max(np.abs(pair.overlap_rate - pair.predicted_rate)))
    checks.info('overlap_rate_gap', gap, "numerical d<phi|psi>/dt against the predicted rate")

    linear = evolve_pair(scenario.initial_state(), scenario.partner_state(), sys, scenario.evolver,
                         scenario.steps, flow=Flow.TDSE)
    checks.below('tdse_divergence', linear.divergence_change())

    psi = scenario.initial_state()
    checks.below('defect_self', abs(hermiticity_defect(psi, psi, sys)))

    defects = []
    for grid in (scenario.grid, scenario.grid.refined()):
        ground = ComplexField(grid=grid, values=oscillator_eigenfunction(grid.axis(0), 0))
        mixed = ComplexField(grid=grid, values=(oscillator_eigenfunction(grid.axis(0), 0)
                                                + 1j * oscillator_eigenfunction(grid.axis(0), 1)) / np.sqrt(2.0))
        defects.append(hermiticity_defect(mixed, ground, sys))
    checks.above('defect_nonzero', abs(defects[0]), 0.0, f"defect = {defects[0]!r}")
    checks.below('defect_refinement', abs(defects[1] - defects[0]) / abs(defects[0]))
    excited = ComplexField(grid=scenario.grid, values=oscillator_eigenfunction(scenario.grid.axis(0), 1))
    ground = ComplexField(grid=scenario.grid, values=oscillator_eigenfunction(scenario.grid.axis(0), 0))
    checks.info('defect_ground_excited', abs(hermiticity_defect(excited, ground, sys)),
                "orthogonal stationary pair")

    p = scenario.params
    omega = p['hbar'] / (2.0 * p['mass'] * p['sigma'] ** 2)
    basis = oscillator_basis(scenario.grid, p['basis_size'], p['mass'], omega, p['hbar'])
    deviation = galerkin_consistency(basis, sys, psi, scenario.evolver, p['galerkin_steps'])
    checks.info('galerkin_deviation', float(np.max(deviation)),
                f"{basis.N}-mode flow against the projected grid run over {p['galerkin_steps']} steps")


def _toy_sweep(p: Dict[str, Any]) -> Scenario:
    a0 = np.asarray(p['a0_re'], dtype=float) + 1j * np.asarray(p['a0_im'], dtype=float)
    return Scenario(
        name="toy_chaos_sweep", description="Order-parameter toy generator swept over the coupling", params=p,
        reference={'norm': float(np.linalg.norm(a0))},
        thresholds={'linear_exponents': 1e-3, 'diagonal_spectrum': 1e-4, 'anti_hermitian': 1e-10},
    )


def _toy_sweep_checks(scenario: Scenario, checks: _Checks) -> None:
    p = scenario.params
    a0 = np.asarray(p['a0_re'], dtype=float) + 1j * np.asarray(p['a0_im'], dtype=float)
    a0 = CoefficientState(a=a0 / np.linalg.norm(a0))

    entries = lyapunov_sweep(lambda g: toy_nonlinear_generator(p['N'], g, p['energies']), p['g_values'], a0,
                             p['dt'], p['steps'], p['renorm_stride'], workers=p.get('workers', 1))
    for entry in entries:
        checks.above(f"refinement_g{entry.parameter:g}", float(entry.consistent), 0.5,
                     f"largest {entry.largest!r}, dt/2 {entry.largest_half_dt!r}, "
                     f"2x steps {entry.largest_double_steps!r}")

    grid = _periodic_line(p['basis_points'], p['basis_extent'])
    system = ParticleSystem(masses=(1.0,), dims=(1,), potential=_harmonic(1.0, 1.0))
    basis = oscillator_basis(grid, p['basis_size'])
    gen = galerkin_project(hamiltonian_operator(system), basis, system)
    checks.below('anti_hermitian', gen.anti_hermitian_residual())
    start = CoefficientState(a=np.ones(basis.N) / np.sqrt(basis.N))
    result = lyapunov_spectrum(gen, start, p['dt'], p['linear_steps'], p['renorm_stride'])
    checks.below('linear_exponents', float(np.max(np.abs(result.spectrum))))

    rates = np.asarray(p['diagonal_rates'], dtype=float)
    diagonal = lyapunov_spectrum(linear_real_flow(np.diag(rates)), np.ones(len(rates)), p['diagonal_dt'],
                                 p['linear_steps'], 1)
    checks.below('diagonal_spectrum', float(np.max(np.abs(diagonal.spectrum - np.sort(rates)[::-1]))))


def _ho2d(p: Dict[str, Any]) -> Scenario:
    n, L = p['points'], p['extent']
    grid = SpatialGrid(points=(n, n), lower=(-L, -L), upper=(L, L), boundary=Boundary.PERIODIC)
    wx, wy = p['omega_x'], p['omega_y']

    def potential(coords, t):
        return 0.5 * (wx ** 2 * coords[0] ** 2 + wy ** 2 * coords[1] ** 2)

    system = ParticleSystem(masses=(1.0,), dims=(2,), potential=potential)

    def initial():
        return ComplexField(grid=grid, values=sum(c * phi for c, phi, _ in _ho2d_components(grid, wx, wy)))

    return Scenario(
        name="ho2d_superposition", description="Incommensurate 2D oscillator superposition", params=p,
        grid=grid, system=system, steps=p['steps'],
        reference={'omega_ratio': wy / wx},
        thresholds={}, initial=initial,
        analytic=lambda: analytic_record(grid, _ho2d_components(grid, wx, wy), p['dt'], p['steps']),
    )


def _ho2d_components(grid: SpatialGrid, wx: float, wy: float):
    x, y = grid.mesh()
    out = []
    for nx, ny in ((0, 0), (1, 0), (0, 1), (1, 1)):
        phi = oscillator_eigenfunction(x, nx, omega=wx) * oscillator_eigenfunction(y, ny, omega=wy)
        out.append((0.5, phi, (nx + 0.5) * wx + (ny + 0.5) * wy))
    return out


def _ho2d_checks(scenario: Scenario, checks: _Checks) -> None:
    p = scenario.params
    record = scenario.evolve()
    a = np.asarray(p['trajectory_start'], dtype=float)
    b = a + np.asarray(p['separation'], dtype=float)
    span = record.times[-1]
    for label, window in (('full', (0.0, span)), ('early', (0.0, span / 2)), ('late', (span / 2, span))):
        sep = trajectory_separation(record, a, b, scenario.system, window=window)
        checks.info(f"slope_{label}", sep.slope, f"reliable={sep.reliable}")


DEFAULTS: Dict[str, Dict[str, Any]] = {
    'ho_ground': {'points': 512, 'extent': 20.0, 'mass': 1.0, 'omega': 1.0, 'hbar': 1.0, 'dt': 0.005,
                  'steps': 200, 'trajectory_start': 0.7},
    'ho_excited': {'points': 2049, 'extent': 20.0, 'mass': 1.0, 'omega': 1.0, 'hbar': 1.0, 'dt': 0.005,
                   'steps': 100},
    'ho_coherent': {'points': 512, 'extent': 20.0, 'mass': 1.0, 'omega': 1.0, 'hbar': 1.0, 'amplitude': 2.0,
                    'dt': 0.005, 'steps': 1257, 'trajectory_offsets': [0.0, -0.5, 0.5],
                    'force_times': [0.0, 0.5, 1.0]},
    'free_gaussian': {'points': 512, 'extent': 20.0, 'mass': 1.0, 'hbar': 1.0, 'sigma0': 1.0, 'center': 0.0,
                      'k0': 0.0, 'dt': 0.005, 'steps': 200, 'seed': 7, 'force_times': [0.0, 0.5, 1.0]},
    'hydrogen_radial': {'points': 2048, 'r_max': 40.0, 'mass': 1.0, 'hbar': 1.0, 'coupling': 1.0,
                        'dt': 0.01, 'steps': 100, 'balance_window': [2.0, 20.0]},
    'two_particle_cm_planewave': {'points': 128, 'extent': 20.0, 'mass': 1.0, 'hbar': 1.0, 'cm_mode': 2,
                                  'width': 1.5, 'eps_rel': 1e-4, 'dt': 0.01, 'steps': 100,
                                  'trajectory_start': [1.0, -0.5]},
    'noQ_divergence_pair': {'points': 512, 'extent': 20.0, 'mass': 1.0, 'hbar': 1.0, 'sigma': 1.0,
                            'offset': 1e-3, 'chirp': -0.5, 'dt': 0.002, 'steps': 500, 'basis_size': 24,
                            'galerkin_steps': 100},
    'toy_chaos_sweep': {'N': 4, 'energies': default_energies(4), 'g_values': [0.0, 0.5, 1.0, 2.0],
                        'a0_re': [1.0, 0.8, 0.0, 0.3], 'a0_im': [0.0, 0.2, 0.5, 0.0], 'dt': 0.02,
                        'steps': 10000, 'renorm_stride': 5, 'linear_steps': 2000, 'basis_size': 8,
                        'basis_points': 512, 'basis_extent': 20.0,
                        'diagonal_rates': [0.3, 0.1, -0.2, -0.5], 'diagonal_dt': 0.01},
    'ho2d_superposition': {'points': 64, 'extent': 8.0, 'omega_x': 1.0, 'omega_y': 2.0 ** 0.5, 'dt': 0.05,
                           'steps': 200, 'trajectory_start': [0.3, 0.2], 'separation': [1e-3, 0.0]},
}

_BUILDERS: Dict[str, Callable[[Dict[str, Any]], Scenario]] = {
    'ho_ground': _ho_ground,
    'ho_excited': _ho_excited,
    'ho_coherent': _ho_coherent,
    'free_gaussian': _free_gaussian,
    'hydrogen_radial': _hydrogen_radial,
    'two_particle_cm_planewave': _two_particle,
    'noQ_divergence_pair': _noQ_pair,
    'toy_chaos_sweep': _toy_sweep,
    'ho2d_superposition': _ho2d,
}

_CHECKS: Dict[str, Callable[[Scenario, _Checks], None]] = {
    'ho_ground': _ho_ground_checks,
    'ho_excited': _ho_excited_checks,
    'ho_coherent': _ho_coherent_checks,
    'free_gaussian': _free_gaussian_checks,
    'hydrogen_radial': _hydrogen_checks,
    'two_particle_cm_planewave': _two_particle_checks,
    'noQ_divergence_pair': _noQ_pair_checks,
    'toy_chaos_sweep': _toy_sweep_checks,
    'ho2d_superposition': _ho2d_checks,
}

CATALOG: Tuple[str, ...] = tuple(_BUILDERS)


def build(name: str, params: Optional[Dict[str, Any]] = None) -> Scenario:
    """
    Construct a catalog scenario, optionally overriding its parameters.

    Raises:
        ValueError: unknown scenario name or unknown parameter key
    """
    if name not in _BUILDERS:
        raise ValueError(f"unknown scenario {name!r}; catalog: {', '.join(CATALOG)}")
    params = dict(params or {})
    allowed = set(DEFAULTS[name]) | {'workers'}
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise ValueError(f"unknown parameter(s) for {name}: {', '.join(unknown)}")
    return _BUILDERS[name]({**DEFAULTS[name], **params})


def run_acceptance(scenario: Scenario) -> AcceptanceReport:
    """Execute the scenario's wired checks; errors become failed entries."""
    checks = _Checks(scenario)
    started = time.perf_counter()
    try:
        _CHECKS[scenario.name](scenario, checks)
    except (BohmflowError, ValueError) as e:
        logger.error(f"Acceptance for {scenario.name} stopped: {e}")
        checks.fail('error', str(e))
    runtime = time.perf_counter() - started
    report = AcceptanceReport(scenario=scenario.name, checks=tuple(checks.results), runtime=runtime)
    status = "passed" if report.passed else f"FAILED ({len(report.failures())} checks)"
    logger.info(f"Acceptance {scenario.name}: {status} in {runtime:.1f}s")
    return report

"""Time evolution of wavefunctions under the linear and the Q-removed flows."""

import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Tuple

import numpy as np
import scipy.sparse as sparse
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.sparse.linalg import splu

from .config import (
    MASK_WARNING_FRACTION,
    NODE_EPS_REL,
    NONLINEAR_CLAMP,
    NORM_WARNING_TOL,
    RK4_IMAGINARY_LIMIT,
    RK4_STABILITY_C,
)
from .errors import NumericalAbort
from .field_core import (
    ComplexField,
    ParticleSystem,
    RealField,
    SpatialGrid,
    derivative_values,
    inner_product,
    inner_values,
    laplacian_values,
    node_mask_for,
)

logger = logging.getLogger(__name__)


class Scheme(str, Enum):
    """Time-stepping schemes."""
    SPLIT_STEP_FOURIER = "split_step_fourier"
    CRANK_NICOLSON = "crank_nicolson"
    EXPLICIT_RK4 = "explicit_rk4"


class Flow(str, Enum):
    """Which equation of motion a record integrates."""
    TDSE = "tdse"
    NO_Q = "noQ"
    LINEAR_RK4 = "linear"


class EvolverConfig(BaseModel):
    """Time step, scheme and snapshot stride for an evolution run."""
    model_config = ConfigDict(frozen=True)

    dt: float = Field(..., gt=0, description="Time step")
    scheme: Scheme = Field(Scheme.SPLIT_STEP_FOURIER, description="Integration scheme")
    record_stride: int = Field(1, ge=1, description="Steps between snapshots")
    stability_c: float = Field(RK4_STABILITY_C, gt=0, description="RK4 bound dt <= c*(m/hbar)/sum_k h_k^-2")
    nonlinear_clamp: float = Field(NONLINEAR_CLAMP, gt=0, description="Bound on |psi|^-1 lap|psi| at nodes")
    eps_node_rel: float = Field(NODE_EPS_REL, gt=0, description="Node threshold relative to max|psi|")

    def rk4_bound(self, grid: SpatialGrid, sys: ParticleSystem) -> float:
        """dt <= c (m / hbar) / sum_k h_k^-2: the 1D bound c (m / hbar) h^2 shared across axes."""
        return self.stability_c * min(sys.masses) / sys.hbar / sum(h ** -2.0 for h in grid.spacing)

    def check_for(self, grid: SpatialGrid, sys: ParticleSystem, flow: Flow) -> None:
        """Reject scheme/boundary/flow combinations and unstable RK4 steps."""
        sys.check_grid(grid)
        if self.scheme == Scheme.SPLIT_STEP_FOURIER and not grid.periodic:
            raise ValueError('SplitStepFourier requires a periodic grid')
        if self.scheme == Scheme.EXPLICIT_RK4 and flow == Flow.TDSE:
            raise ValueError('ExplicitRK4 integrates the no-Q flow only')
        if self.scheme == Scheme.CRANK_NICOLSON and flow != Flow.TDSE:
            raise ValueError('CrankNicolson cannot integrate the nonlinear no-Q flow')
        if self.scheme == Scheme.EXPLICIT_RK4:
            bound = self.rk4_bound(grid, sys)
            if self.dt > bound:
                raise ValueError(f'dt={self.dt} exceeds the RK4 stability bound {bound:.3e}')


class EvolutionRecord(BaseModel):
    """Snapshots and diagnostics of one evolution run."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    flow: Flow
    dt: float
    record_stride: int
    steps: Tuple[int, ...]
    times: Tuple[float, ...]
    snapshots: Tuple[ComplexField, ...]
    norms: Tuple[float, ...]
    energies: Tuple[float, ...]
    mask_fractions: Tuple[float, ...]
    step_norms: Tuple[float, ...] = Field(..., description="Norm after every step, including step 0")

    @model_validator(mode='after')
    def validate_series(self):
        count = len(self.snapshots)
        if count == 0:
            raise ValueError('a record needs at least one snapshot')
        if not (len(self.times) == len(self.norms) == len(self.energies) == len(self.steps) == count):
            raise ValueError('one time, norm and energy per snapshot is required')
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError('times must be strictly increasing')
        return self

    @property
    def grid(self) -> SpatialGrid:
        return self.snapshots[0].grid

    @property
    def final(self) -> ComplexField:
        return self.snapshots[-1]

    def norm_drift(self) -> float:
        """Largest deviation of the per-step norm from its initial value."""
        norms = np.asarray(self.step_norms)
        return float(np.max(np.abs(norms - norms[0])))

    def index_at(self, t: float) -> int:
        """Snapshot index closest to time t."""
        return int(np.argmin(np.abs(np.asarray(self.times) - t)))

    def stacked(self) -> np.ndarray:
        return np.stack([s.values for s in self.snapshots])


class PairRecord(BaseModel):
    """Two runs of the same flow from different initial data."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    psi: EvolutionRecord
    phi: EvolutionRecord
    divergence: Tuple[float, ...]
    overlaps: np.ndarray
    overlap_rate: np.ndarray = Field(..., description="Numerical d<phi|psi>/dt")
    predicted_rate: np.ndarray = Field(..., description="hermiticity_defect(psi, phi) / (i hbar)")

    def divergence_change(self) -> float:
        d = np.asarray(self.divergence)
        return float(np.max(np.abs(d - d[0])))

    def norm_drift(self) -> float:
        return max(self.psi.norm_drift(), self.phi.norm_drift())


def _norm_values(values: np.ndarray, grid: SpatialGrid) -> float:
    return float(np.sqrt(max(inner_values(values, values, grid).real, 0.0)))


def hamiltonian_values(values: np.ndarray, grid: SpatialGrid, sys: ParticleSystem,
                       potential: np.ndarray) -> np.ndarray:
    """Linear Hamiltonian applied to samples."""
    out = potential * values
    for axis, m in enumerate(sys.axis_masses()):
        out = out - (sys.hbar ** 2 / (2.0 * m)) * derivative_values(values, grid, axis, 2)
    return out


def energy_expectation(psi: ComplexField, sys: ParticleSystem, t: float = 0.0) -> float:
    """<psi|H|psi> / <psi|psi> for the linear Hamiltonian."""
    V = sys.potential_on(psi.grid, t)
    return _energy_values(psi.values, psi.grid, sys, V)


def _energy_values(values, grid, sys, V) -> float:
    weight = inner_values(values, values, grid).real
    if weight == 0.0:
        return 0.0
    return inner_values(values, hamiltonian_values(values, grid, sys, V), grid).real / weight


def momentum_expectation(psi: ComplexField, sys: ParticleSystem, particle: int) -> np.ndarray:
    """<psi| -i hbar grad_i |psi> / <psi|psi>, one entry per axis of the particle."""
    weight = inner_product(psi, psi).real
    return np.array([
        inner_values(psi.values, -1j * sys.hbar * derivative_values(psi.values, psi.grid, axis, 1),
                     psi.grid).real / weight
        for axis in sys.axes(particle)
    ])


def nonlinear_values(values: np.ndarray, grid: SpatialGrid, sys: ParticleSystem,
                     eps_node_rel: float = NODE_EPS_REL,
                     clamp: float = NONLINEAR_CLAMP) -> Tuple[np.ndarray, np.ndarray]:
    """
    Real multiplication operator sum_i (hbar^2 / 2 m_i) |psi|^-1 lap_i |psi| and its node mask.

    At masked points the ratio |psi|^-1 lap_i |psi| is clamped to [-clamp, clamp].
    """
    R = np.abs(values)
    scale = float(np.max(R, initial=0.0))
    mask = node_mask_for(R, eps_node_rel * scale if scale > 0 else None)
    W = np.zeros(grid.shape)
    for particle, m in enumerate(sys.masses):
        lap = laplacian_values(R, grid, sys.axes(particle))
        with np.errstate(divide='ignore', invalid='ignore'):
            ratio = lap / R
        ratio = np.nan_to_num(ratio, nan=0.0, posinf=clamp, neginf=-clamp)
        ratio = np.where(mask, np.clip(ratio, -clamp, clamp), ratio)
        W += (sys.hbar ** 2 / (2.0 * m)) * ratio
    return W, mask


def nonlinear_potential(psi: ComplexField, sys: ParticleSystem,
                        eps_node_rel: float = NODE_EPS_REL,
                        clamp: float = NONLINEAR_CLAMP) -> RealField:
    """The state-dependent term added to the Hamiltonian when Q is removed."""
    W, _ = nonlinear_values(psi.values, psi.grid, sys, eps_node_rel, clamp)
    return RealField(grid=psi.grid, values=W, name=f"W_{psi.name}")


class _Potential:
    """Caches V for time-independent systems."""

    def __init__(self, grid: SpatialGrid, sys: ParticleSystem):
        self.grid = grid
        self.sys = sys
        self._static = None if sys.time_dependent else sys.potential_on(grid)

    def __call__(self, t: float) -> np.ndarray:
        if self._static is not None:
            return self._static
        return self.sys.potential_on(self.grid, t)


class _SplitStepFourier:
    """Strang splitting exp(-iV dt/2) exp(-iT dt) exp(-iV dt/2), optional nonlinear substep."""

    def __init__(self, grid, sys, cfg: EvolverConfig, nonlinear: bool):
        self.grid = grid
        self.sys = sys
        self.cfg = cfg
        self.nonlinear = nonlinear
        self.potential = _Potential(grid, sys)
        phase = np.zeros(grid.shape)
        for axis, m in enumerate(sys.axis_masses()):
            shape = [1] * grid.total_dim
            shape[axis] = -1
            phase = phase + (sys.hbar * grid.wavenumbers(axis) ** 2 / (2.0 * m)).reshape(shape)
        self.kinetic = np.exp(-1j * phase * cfg.dt)

    def _half(self, values, t):
        energy = self.potential(t)
        if self.nonlinear:
            W, _ = nonlinear_values(values, self.grid, self.sys, self.cfg.eps_node_rel, self.cfg.nonlinear_clamp)
            energy = energy + W
        return values * np.exp(-1j * energy * self.cfg.dt / (2.0 * self.sys.hbar))

    def step(self, values, t):
        values = self._half(values, t)
        values = np.fft.ifftn(np.fft.fftn(values) * self.kinetic)
        return self._half(values, t + self.cfg.dt)


def _second_difference(n: int, h: float, periodic: bool) -> sparse.csr_matrix:
    if periodic:
        d2 = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n), format='lil')
        d2[0, n - 1] = 1.0
        d2[n - 1, 0] = 1.0
        return d2.tocsr() / h ** 2
    return sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n - 2, n - 2), format='csr') / h ** 2


class _CrankNicolson:
    """(1 + iH dt/2hbar) psi' = (1 - iH dt/2hbar) psi on the grid unknowns."""

    def __init__(self, grid, sys, cfg: EvolverConfig):
        self.grid = grid
        self.sys = sys
        self.cfg = cfg
        self.potential = _Potential(grid, sys)
        if grid.periodic:
            self.unknowns = tuple(slice(None) for _ in grid.points)
            sizes = list(grid.points)
        else:
            self.unknowns = tuple(slice(1, -1) for _ in grid.points)
            sizes = [n - 2 for n in grid.points]
        kinetic = sparse.csr_matrix((int(np.prod(sizes)), int(np.prod(sizes))), dtype=complex)
        for axis, m in enumerate(sys.axis_masses()):
            d2 = _second_difference(grid.points[axis], grid.spacing[axis], grid.periodic)
            term = sparse.identity(1, format='csr')
            for k, size in enumerate(sizes):
                term = sparse.kron(term, d2 if k == axis else sparse.identity(size, format='csr'), format='csr')
            kinetic = kinetic - (sys.hbar ** 2 / (2.0 * m)) * term
        self.kinetic = kinetic
        self.size = kinetic.shape[0]
        self._factor_time = None
        self._build(0.0)

    def _build(self, t):
        V = self.potential(t)[self.unknowns].ravel()
        H = self.kinetic + sparse.diags(V)
        factor = 1j * self.cfg.dt / (2.0 * self.sys.hbar)
        identity = sparse.identity(self.size, dtype=complex, format='csc')
        self.lu = splu((identity + factor * H).tocsc())
        self.rhs = (identity - factor * H).tocsr()
        self._factor_time = t

    def step(self, values, t):
        if self.sys.time_dependent:
            self._build(t + 0.5 * self.cfg.dt)
        inner = values[self.unknowns].ravel()
        out = np.zeros_like(values)
        out[self.unknowns] = self.lu.solve(self.rhs @ inner).reshape(out[self.unknowns].shape)
        return out


class _ExplicitRK4:
    """Classical RK4 on i hbar dpsi/dt = (H + W(psi)) psi."""

    def __init__(self, grid, sys, cfg: EvolverConfig, nonlinear: bool):
        self.grid = grid
        self.sys = sys
        self.cfg = cfg
        self.nonlinear = nonlinear
        self.potential = _Potential(grid, sys)
        self.boundary = grid.boundary_mask()
        cap = RK4_IMAGINARY_LIMIT * min(sys.masses) / (sys.hbar * cfg.dt)
        self.clamp = min(cfg.nonlinear_clamp, cap)
        if nonlinear and self.clamp < cfg.nonlinear_clamp:
            logger.info(f"Node clamp reduced from {cfg.nonlinear_clamp:.3g} to {self.clamp:.3g} "
                        f"to stay inside the RK4 stability region")

    def rhs(self, values, t):
        out = hamiltonian_values(values, self.grid, self.sys, self.potential(t))
        if self.nonlinear:
            W, _ = nonlinear_values(values, self.grid, self.sys, self.cfg.eps_node_rel, self.clamp)
            out = out + W * values
        out = out / (1j * self.sys.hbar)
        out[self.boundary] = 0.0
        return out

    def step(self, values, t):
        dt = self.cfg.dt
        k1 = self.rhs(values, t)
        k2 = self.rhs(values + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = self.rhs(values + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = self.rhs(values + dt * k3, t + dt)
        return values + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def _check_initial(psi0: ComplexField, sys: ParticleSystem, steps: int) -> None:
    sys.check_grid(psi0.grid)
    if steps < 0:
        raise ValueError('steps must be nonnegative')
    n0 = _norm_values(psi0.values, psi0.grid)
    if abs(n0 - 1.0) > NORM_WARNING_TOL:
        logger.warning(f"Initial state {psi0.name!r} is not normalized (norm = {n0:.9f})")


def _run(psi0: ComplexField, sys: ParticleSystem, cfg: EvolverConfig, steps: int,
         propagator, flow: Flow) -> EvolutionRecord:
    grid = psi0.grid
    potential = _Potential(grid, sys)
    values = np.array(psi0.values)
    track_mask = flow != Flow.TDSE
    flagged = False

    rec_steps, times, snapshots, norms, energies, fractions = [], [], [], [], [], []
    step_norms = [_norm_values(values, grid)]

    def record(n, t):
        nonlocal flagged
        rec_steps.append(n)
        times.append(t)
        snapshots.append(ComplexField(grid=grid, values=values, name=psi0.name))
        norms.append(step_norms[-1])
        energies.append(_energy_values(values, grid, sys, potential(t)))
        fraction = 0.0
        if track_mask:
            R = np.abs(values)
            fraction = float(np.mean(node_mask_for(R, cfg.eps_node_rel * float(np.max(R)) or None)))
            if fraction > MASK_WARNING_FRACTION and not flagged:
                logger.warning(f"{100 * fraction:.1f}% of grid points are node-masked at t={t:.4g}; "
                               f"nonlinear term is clamped there")
                flagged = True
        fractions.append(fraction)

    record(0, 0.0)
    for n in range(1, steps + 1):
        t_prev = (n - 1) * cfg.dt
        values = propagator.step(values, t_prev)
        if not np.all(np.isfinite(values)):
            raise NumericalAbort(f"non-finite values encountered in {flow.value} evolution", step=n)
        step_norms.append(_norm_values(values, grid))
        if n % cfg.record_stride == 0:
            record(n, n * cfg.dt)

    logger.debug(f"{flow.value} run finished: {steps} steps, {len(snapshots)} snapshots")
    return EvolutionRecord(
        flow=flow,
        dt=cfg.dt,
        record_stride=cfg.record_stride,
        steps=tuple(rec_steps),
        times=tuple(times),
        snapshots=tuple(snapshots),
        norms=tuple(norms),
        energies=tuple(energies),
        mask_fractions=tuple(fractions),
        step_norms=tuple(step_norms),
    )


def evolve_tdse(psi0: ComplexField, sys: ParticleSystem, cfg: EvolverConfig, steps: int) -> EvolutionRecord:
    """
    Unitary evolution under the linear Schrodinger equation.

    Args:
        psi0: initial state (a warning is logged if it is not normalized)
        sys: particle system supplying masses, hbar and V
        cfg: SplitStepFourier (periodic grids) or CrankNicolson
        steps: number of time steps

    Returns:
        EvolutionRecord with 1 + steps // record_stride snapshots

    Raises:
        ValueError: scheme/boundary mismatch
        NumericalAbort: non-finite values, with the step index
    """
    cfg.check_for(psi0.grid, sys, Flow.TDSE)
    _check_initial(psi0, sys, steps)
    if cfg.scheme == Scheme.SPLIT_STEP_FOURIER:
        propagator = _SplitStepFourier(psi0.grid, sys, cfg, nonlinear=False)
    else:
        propagator = _CrankNicolson(psi0.grid, sys, cfg)
    return _run(psi0, sys, cfg, steps, propagator, Flow.TDSE)


def evolve_noQ(psi0: ComplexField, sys: ParticleSystem, cfg: EvolverConfig, steps: int,
               include_nonlinear: bool = True) -> EvolutionRecord:
    """
    Evolution with the quantum potential removed: i hbar dpsi/dt = (H + W(psi)) psi.

    The state is never renormalized; norm drift is recorded each step.
    With include_nonlinear=False the same integrator runs the linear equation.
    """
    flow = Flow.NO_Q if include_nonlinear else Flow.LINEAR_RK4
    cfg.check_for(psi0.grid, sys, flow)
    _check_initial(psi0, sys, steps)
    if cfg.scheme == Scheme.SPLIT_STEP_FOURIER:
        propagator = _SplitStepFourier(psi0.grid, sys, cfg, nonlinear=include_nonlinear)
    else:
        propagator = _ExplicitRK4(psi0.grid, sys, cfg, nonlinear=include_nonlinear)
    return _run(psi0, sys, cfg, steps, propagator, flow)


def divergence_measure(psi: ComplexField, phi: ComplexField) -> float:
    """D = integral |psi - phi|^2."""
    if psi.grid != phi.grid:
        raise ValueError('fields live on different grids')
    diff = psi.values - phi.values
    return max(inner_values(diff, diff, psi.grid).real, 0.0)


def hermiticity_defect(psi: ComplexField, phi: ComplexField, sys: ParticleSystem,
                       eps_node_rel: float = NODE_EPS_REL,
                       clamp: float = NONLINEAR_CLAMP) -> complex:
    """integral phi* psi [W(psi) - W(phi)], W the no-Q nonlinear term (includes hbar^2/2m)."""
    if psi.grid != phi.grid:
        raise ValueError('fields live on different grids')
    W_psi, _ = nonlinear_values(psi.values, psi.grid, sys, eps_node_rel, clamp)
    W_phi, _ = nonlinear_values(phi.values, phi.grid, sys, eps_node_rel, clamp)
    return inner_values(phi.values, (W_psi - W_phi) * psi.values, psi.grid)


def evolve_pair(psi0: ComplexField, phi0: ComplexField, sys: ParticleSystem, cfg: EvolverConfig,
                steps: int, flow: Flow = Flow.NO_Q) -> PairRecord:
    """Evolve two initial states with the same flow and track D(t) and <phi|psi>(t)."""
    if psi0.grid != phi0.grid:
        raise ValueError('fields live on different grids')
    evolve = evolve_tdse if flow == Flow.TDSE else evolve_noQ
    with ThreadPoolExecutor(max_workers=2) as executor:
        psi_future = executor.submit(evolve, psi0, sys, cfg, steps)
        phi_future = executor.submit(evolve, phi0, sys, cfg, steps)
        psi_record = psi_future.result()
        phi_record = phi_future.result()

    divergence = tuple(divergence_measure(a, b) for a, b in zip(psi_record.snapshots, phi_record.snapshots))
    overlaps = np.array([inner_product(b, a) for a, b in zip(psi_record.snapshots, phi_record.snapshots)])
    times = np.asarray(psi_record.times)
    rate = np.gradient(overlaps, times) if len(times) > 1 else np.zeros(1, dtype=complex)
    if flow == Flow.TDSE:
        predicted = np.zeros(len(times), dtype=complex)
    else:
        predicted = np.array([
            hermiticity_defect(a, b, sys, cfg.eps_node_rel, cfg.nonlinear_clamp) / (1j * sys.hbar)
            for a, b in zip(psi_record.snapshots, phi_record.snapshots)
        ])
    logger.info(f"Pair run ({flow.value}): D(0)={divergence[0]:.6e}, D(end)={divergence[-1]:.6e}")
    return PairRecord(
        psi=psi_record,
        phi=phi_record,
        divergence=divergence,
        overlaps=overlaps,
        overlap_rate=rate,
        predicted_rate=predicted,
    )


def _current_divergence(values: np.ndarray, grid: SpatialGrid, sys: ParticleSystem) -> np.ndarray:
    div = np.zeros(grid.shape)
    for axis, m in enumerate(sys.axis_masses()):
        j = (sys.hbar / m) * np.imag(np.conj(values) * derivative_values(values, grid, axis, 1))
        div += derivative_values(j, grid, axis, 1)
    return div


def continuity_residual(record: EvolutionRecord, sys: ParticleSystem) -> np.ndarray:
    """
    Max over grid points of |d(R^2)/dt + sum_i div_i(R^2 v_i)| between consecutive snapshots.

    The time derivative is a forward difference between snapshots and the divergence is
    averaged over both ends, so the residual is second order in the snapshot spacing.
    """
    grid = record.grid
    interior = ~grid.boundary_mask()
    residuals = []
    for a, b, ta, tb in zip(record.snapshots, record.snapshots[1:], record.times, record.times[1:]):
        rate = (np.abs(b.values) ** 2 - np.abs(a.values) ** 2) / (tb - ta)
        div = 0.5 * (_current_divergence(a.values, grid, sys) + _current_divergence(b.values, grid, sys))
        residuals.append(float(np.max(np.abs(rate + div)[interior])))
    return np.array(residuals)

"""Quantum potential, quantum and classical forces, guidance velocity and particle trajectories."""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.interpolate import RegularGridInterpolator

from .config import INTERIOR_LEVEL, SPEED_CLAMP_FACTOR
from .dynamics import EvolutionRecord
from .field_core import (
    ComplexField,
    ParticleSystem,
    RealField,
    SpatialGrid,
    VectorField,
    central_difference,
    derivative_values,
    laplacian_values,
    node_mask_for,
)

logger = logging.getLogger(__name__)


class QuantumPotentialField(BaseModel):
    """Q = -sum_i (hbar^2 / 2 m_i) lap_i R / R with its node mask; masked points hold 0."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    Q: RealField
    node_mask: np.ndarray
    particle_axes: Tuple[Tuple[int, ...], ...] = Field(..., description="Grid axes of each particle")

    @field_validator('node_mask', mode='before')
    @classmethod
    def coerce_mask(cls, v):
        mask = np.array(v, dtype=bool, copy=True)
        mask.flags.writeable = False
        return mask

    @property
    def grid(self) -> SpatialGrid:
        return self.Q.grid

    @property
    def mask_fraction(self) -> float:
        return float(np.mean(self.node_mask))


def interior_mask(psi: ComplexField, level: float = INTERIOR_LEVEL) -> np.ndarray:
    """Points away from nodes and the pinned boundary: R >= level * max R."""
    R = np.abs(psi.values)
    return (R >= level * float(np.max(R))) & (R > 0) & ~psi.grid.boundary_mask()


def quantum_potential(psi: ComplexField, sys: ParticleSystem,
                      eps_node: Optional[float] = None) -> QuantumPotentialField:
    """
    Quantum potential of psi.

    Args:
        psi: wavefunction samples
        sys: particle system (masses, hbar)
        eps_node: absolute node threshold; defaults to a small fraction of max|psi|

    Returns:
        QuantumPotentialField, invariant under psi -> c * psi for c != 0
    """
    sys.check_grid(psi.grid)
    grid = psi.grid
    R = np.abs(psi.values)
    mask = node_mask_for(R, eps_node) | grid.boundary_mask()
    safe = np.where(mask, 1.0, R)
    Q = np.zeros(grid.shape)
    for particle, m in enumerate(sys.masses):
        Q -= (sys.hbar ** 2 / (2.0 * m)) * laplacian_values(R, grid, sys.axes(particle)) / safe
    Q[mask] = 0.0
    if np.all(mask):
        logger.warning(f"Quantum potential of {psi.name!r} is fully node-masked")
    return QuantumPotentialField(
        Q=RealField(grid=grid, values=Q, name=f"Q_{psi.name}"),
        node_mask=mask,
        particle_axes=tuple(sys.axes(i) for i in range(sys.n)),
    )


def _dilate(mask: np.ndarray, axes: Sequence[int], wrap: bool) -> np.ndarray:
    grown = mask.copy()
    for axis in axes:
        if wrap:
            grown |= np.roll(mask, 1, axis=axis) | np.roll(mask, -1, axis=axis)
            continue
        index_lo = [slice(None)] * mask.ndim
        index_hi = [slice(None)] * mask.ndim
        index_lo[axis] = slice(None, -1)
        index_hi[axis] = slice(1, None)
        grown[tuple(index_lo)] |= mask[tuple(index_hi)]
        grown[tuple(index_hi)] |= mask[tuple(index_lo)]
    return grown


def quantum_force(qpf: QuantumPotentialField, particle: int) -> VectorField:
    """
    -grad_i Q for one particle.

    Without masked points the gradient follows the grid policy (spectral on periodic grids).
    Otherwise central stencils are used and any point touching a masked neighbor is masked.
    """
    if not 0 <= particle < len(qpf.particle_axes):
        raise ValueError(f'particle index {particle} out of range')
    axes = qpf.particle_axes[particle]
    grid = qpf.grid
    Q = qpf.Q.values
    if not np.any(qpf.node_mask):
        components = tuple(-derivative_values(Q, grid, a, 1) for a in axes)
        return VectorField(grid=grid, axes=axes, components=components,
                           mask=np.zeros(grid.shape, dtype=bool))
    mask = _dilate(qpf.node_mask, axes, grid.periodic)
    components = tuple(np.where(mask, 0.0, -central_difference(Q, grid, a, 1)) for a in axes)
    return VectorField(grid=grid, axes=axes, components=components, mask=mask)


def classical_force(sys: ParticleSystem, grid: SpatialGrid, particle: int, t: float = 0.0) -> VectorField:
    """-grad_i V with second-order one-sided stencils at the edges (V need not be periodic)."""
    axes = sys.axes(particle)
    V = sys.potential_on(grid, t)
    components = tuple(-np.gradient(V, grid.spacing[a], axis=a, edge_order=2) for a in axes)
    return VectorField(grid=grid, axes=axes, components=components)


class ForceReport(BaseModel):
    """Quantum and classical forces with their pointwise and ensemble diagnostics."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    potential: QuantumPotentialField
    quantum: Tuple[VectorField, ...]
    classical: Tuple[VectorField, ...]
    total_quantum: Optional[VectorField] = Field(None, description="sum_i F_i, when all particles share dims")
    ensemble_average: Tuple[np.ndarray, ...] = Field(..., description="R^2-weighted quantum force per particle")
    mask_fraction: float
    max_net_force: float = Field(..., description="max over interior of |F_i - grad_i V|")
    pair_max: Optional[float] = Field(None, description="max |F_1 + F_2| over unmasked points")

    def summary(self) -> Dict[str, float]:
        row = {'mask_fraction': self.mask_fraction, 'max_net_force': self.max_net_force}
        for i, avg in enumerate(self.ensemble_average):
            for k, value in enumerate(avg):
                row[f'avg_force_{i}_{k}'] = float(value)
        if self.pair_max is not None:
            row['pair_max'] = self.pair_max
        return row


def force_balance_report(psi: ComplexField, sys: ParticleSystem, t: float = 0.0,
                         eps_node: Optional[float] = None) -> ForceReport:
    """Assemble per-particle forces, their R^2 averages and, for two particles, max |F_1 + F_2|."""
    qpf = quantum_potential(psi, sys, eps_node)
    grid = psi.grid
    quantum = tuple(quantum_force(qpf, i) for i in range(sys.n))
    classical = tuple(classical_force(sys, grid, i, t) for i in range(sys.n))

    density = grid.quadrature_weights() * np.abs(psi.values) ** 2
    total_weight = float(np.sum(density))
    averages = []
    for force in quantum:
        valid = force.valid()
        averages.append(np.array([np.sum(density[valid] * c[valid]) for c in force.components]) / total_weight)

    interior = interior_mask(psi)
    net = 0.0
    for fq, fc in zip(quantum, classical):
        keep = interior & fq.valid()
        if np.any(keep):
            magnitude = np.sqrt(sum((a + b) ** 2 for a, b in zip(fq.components, fc.components)))
            net = max(net, float(np.max(magnitude[keep])))

    total = None
    if len(set(sys.dims)) == 1:
        mask = np.logical_or.reduce([f.mask for f in quantum])
        components = tuple(np.where(mask, 0.0, sum(f.components[k] for f in quantum))
                           for k in range(sys.dims[0]))
        total = VectorField(grid=grid, axes=tuple(range(sys.dims[0])), components=components, mask=mask)

    pair_max = None
    if sys.n == 2 and total is not None:
        valid = total.valid()
        pair_max = float(np.max(total.magnitude()[valid])) if np.any(valid) else 0.0

    return ForceReport(
        potential=qpf,
        quantum=quantum,
        classical=classical,
        total_quantum=total,
        ensemble_average=tuple(averages),
        mask_fraction=qpf.mask_fraction,
        max_net_force=net,
        pair_max=pair_max,
    )


def bohm_velocity(psi: ComplexField, sys: ParticleSystem, particle: int,
                  eps_node: Optional[float] = None) -> VectorField:
    """v_i = hbar Im(psi* grad_i psi) / (m_i |psi|^2), masked at nodes."""
    sys.check_grid(psi.grid)
    axes = sys.axes(particle)
    grid = psi.grid
    values = psi.values
    density = np.abs(values) ** 2
    mask = node_mask_for(np.abs(values), eps_node) | grid.boundary_mask()
    safe = np.where(mask, 1.0, density)
    scale = sys.hbar / sys.masses[particle]
    components = tuple(
        np.where(mask, 0.0, scale * np.imag(np.conj(values) * derivative_values(values, grid, a, 1)) / safe)
        for a in axes
    )
    return VectorField(grid=grid, axes=axes, components=components, mask=mask)


def _velocity_stack(psi: ComplexField, sys: ParticleSystem, eps_node: Optional[float]) -> Tuple[np.ndarray, np.ndarray]:
    fields = [bohm_velocity(psi, sys, i, eps_node) for i in range(sys.n)]
    components = np.stack([c for f in fields for c in f.components], axis=-1)
    return components, fields[0].mask


def _max_interior_speed(record: EvolutionRecord, sys: ParticleSystem, indices: Sequence[int],
                        eps_node: Optional[float] = None) -> float:
    speed = 0.0
    for j in indices:
        psi = record.snapshots[j]
        v, mask = _velocity_stack(psi, sys, eps_node)
        keep = interior_mask(psi) & ~mask
        if np.any(keep):
            speed = max(speed, float(np.max(np.linalg.norm(v, axis=-1)[keep])))
    return speed


def validate_snapshot_stride(record: EvolutionRecord, sys: ParticleSystem) -> None:
    """Require max|v| * (stride * dt) below the smallest grid spacing."""
    speed = _max_interior_speed(record, sys, range(len(record.snapshots)))
    travel = speed * record.dt * record.record_stride
    limit = min(record.grid.spacing)
    if travel >= limit:
        raise ValueError(f'snapshots too sparse for trajectories: max|v|*stride*dt = {travel:.4g} '
                         f'>= grid spacing {limit:.4g}; lower record_stride')


class _SnapshotInterpolator:
    """Multilinear in space, linear in time, over per-snapshot vector samples."""

    def __init__(self, grid: SpatialGrid, times: Sequence[float], samples: List[np.ndarray]):
        self.grid = grid
        self.times = np.asarray(times)
        axes = list(grid.axes())
        if grid.periodic:
            axes = [np.append(a, hi) for a, hi in zip(axes, grid.upper)]
            samples = [np.pad(s, [(0, 1)] * grid.total_dim + [(0, 0)], mode='wrap') for s in samples]
        self.interpolators = [RegularGridInterpolator(tuple(axes), s, method='linear',
                                                   bounds_error=False, fill_value=None) for s in samples]

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        point = np.asarray(x, dtype=float)[None, :]
        if len(self.times) == 1:
            return self.interpolators[0](point)[0]
        j = int(np.clip(np.searchsorted(self.times, t, side='right') - 1, 0, len(self.times) - 2))
        t0, t1 = self.times[j], self.times[j + 1]
        w = float(np.clip((t - t0) / (t1 - t0), 0.0, 1.0))
        return (1.0 - w) * self.interpolators[j](point)[0] + w * self.interpolators[j + 1](point)[0]


class Trajectory(BaseModel):
    """A Bohmian particle path through configuration space."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    positions: np.ndarray = Field(..., description="(T, total_dim) configuration points")
    momenta: np.ndarray = Field(..., description="(T, total_dim) m_i * v_i along the path")
    node_flags: np.ndarray = Field(..., description="True where the path touched a node-masked cell")
    truncated: bool = False
    dims: Tuple[int, ...]

    @model_validator(mode='after')
    def validate_path(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError('trajectory times must be strictly increasing')
        if not (len(self.times) == len(self.positions) == len(self.momenta) == len(self.node_flags)):
            raise ValueError('one position, momentum and flag per time is required')
        return self

    @property
    def touched_node(self) -> bool:
        return bool(np.any(self.node_flags))

    def particle_positions(self, particle: int) -> np.ndarray:
        start = int(sum(self.dims[:particle]))
        return self.positions[:, start:start + self.dims[particle]]

    def total_momentum(self) -> np.ndarray:
        """P = sum_i P_i, for particles of equal dimensionality."""
        if len(set(self.dims)) != 1:
            raise ValueError('total momentum needs particles of equal dimensionality')
        return self.momenta.reshape(len(self.times), len(self.dims), self.dims[0]).sum(axis=1)


def _default_speed_cap(record: EvolutionRecord, sys: ParticleSystem, eps_node: Optional[float]) -> float:
    speed = _max_interior_speed(record, sys, [0], eps_node)
    if speed == 0.0:
        speed = _max_interior_speed(record, sys, range(len(record.snapshots)), eps_node)
    return SPEED_CLAMP_FACTOR * speed if speed > 0 else np.inf


class _GuidanceField:
    """Velocity field of a record, plus the node indicator, at arbitrary (x, t)."""

    def __init__(self, record: EvolutionRecord, sys: ParticleSystem, eps_node: Optional[float] = None):
        samples = []
        for psi in record.snapshots:
            v, mask = _velocity_stack(psi, sys, eps_node)
            samples.append(np.concatenate([v, mask[..., None].astype(float)], axis=-1))
        self.interpolate = _SnapshotInterpolator(record.grid, record.times, samples)

    def __call__(self, x, t) -> Tuple[np.ndarray, bool]:
        sample = self.interpolate(x, t)
        return sample[:-1], bool(sample[-1] > 0.0)


def integrate_trajectory(record: EvolutionRecord, x0: Sequence[float], sys: ParticleSystem,
                         substeps: int = 1, max_speed: Optional[float] = None,
                         eps_node: Optional[float] = None,
                         guidance: Optional[_GuidanceField] = None) -> Trajectory:
    """
    RK4 integration of dx/dt = v(x, t) across the span of the record.

    Args:
        record: evolution whose snapshots supply the guidance field
        x0: starting configuration point (must lie inside the grid)
        sys: particle system
        substeps: RK4 steps per snapshot interval
        max_speed: speed clamp applied near nodes; defaults to 10x the max interior speed at t=0

    Returns:
        Trajectory, truncated and flagged if it leaves the grid
    """
    grid = record.grid
    sys.check_grid(grid)
    x = np.asarray(x0, dtype=float)
    if x.shape != (grid.total_dim,) or not grid.contains(x):
        raise ValueError(f'start point {list(x)} is not inside the grid')
    if substeps < 1:
        raise ValueError('substeps must be >= 1')
    field = guidance or _GuidanceField(record, sys, eps_node)
    cap = _default_speed_cap(record, sys, eps_node) if max_speed is None else max_speed
    masses = sys.axis_masses()

    def velocity(point, t):
        v, near_node = field(point, t)
        speed = float(np.linalg.norm(v))
        if near_node and speed > cap:
            v = v * (cap / speed)
        return v, near_node

    times = np.asarray(record.times)
    t_grid = [times[0]]
    for t0, t1 in zip(times, times[1:]):
        t_grid.extend(t0 + (t1 - t0) * np.arange(1, substeps + 1) / substeps)

    v, flag = velocity(x, t_grid[0])
    out_t, out_x, out_p, out_flag = [t_grid[0]], [x.copy()], [masses * v], [flag]
    truncated = False
    for t0, t1 in zip(t_grid, t_grid[1:]):
        h = t1 - t0
        k1, f1 = velocity(x, t0)
        k2, f2 = velocity(x + 0.5 * h * k1, t0 + 0.5 * h)
        k3, f3 = velocity(x + 0.5 * h * k2, t0 + 0.5 * h)
        k4, f4 = velocity(x + h * k3, t1)
        x_next = x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if not grid.contains(x_next):
            truncated = True
            logger.warning(f"Trajectory from {list(np.round(x0, 6))} left the grid at t={t1:.4g}; truncated")
            break
        x = x_next
        v, flag = velocity(x, t1)
        out_t.append(t1)
        out_x.append(x.copy())
        out_p.append(masses * v)
        out_flag.append(flag or f1 or f2 or f3 or f4)

    flags = np.array(out_flag, dtype=bool)
    if np.any(flags):
        logger.warning(f"Trajectory from {list(np.round(x0, 6))} entered a node-masked region "
                       f"({int(np.sum(flags))} samples)")
    return Trajectory(
        times=np.array(out_t),
        positions=np.array(out_x),
        momenta=np.array(out_p),
        node_flags=flags,
        truncated=truncated,
        dims=sys.dims,
    )


def _force_samples(psi: ComplexField, sys: ParticleSystem, t: float,
                   eps_node: Optional[float]) -> np.ndarray:
    qpf = quantum_potential(psi, sys, eps_node)
    parts = []
    for i in range(sys.n):
        fq = quantum_force(qpf, i)
        fc = classical_force(sys, psi.grid, i, t)
        parts.extend(a + b for a, b in zip(fq.components, fc.components))
    return np.stack(parts, axis=-1)


def newton_residual(traj: Trajectory, record: EvolutionRecord, sys: ParticleSystem,
                    eps_node: Optional[float] = None) -> np.ndarray:
    """|dP/dt - (-grad V - grad Q)| at every trajectory sample."""
    if len(traj.times) < 3:
        raise ValueError('newton_residual needs at least three trajectory samples')
    samples = [_force_samples(psi, sys, t, eps_node) for psi, t in zip(record.snapshots, record.times)]
    force = _SnapshotInterpolator(record.grid, record.times, samples)
    dP = np.gradient(traj.momenta, traj.times, axis=0, edge_order=2)
    expected = np.array([force(x, t) for x, t in zip(traj.positions, traj.times)])
    return np.linalg.norm(dP - expected, axis=1)


class SeparationResult(BaseModel):
    """Separation of two nearby trajectories and its log-growth slope."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    log_separation: np.ndarray
    slope: float
    window: Tuple[float, float]
    reliable: bool


def trajectory_separation(record: EvolutionRecord, x0a: Sequence[float], x0b: Sequence[float],
                          sys: ParticleSystem, window: Optional[Tuple[float, float]] = None,
                          substeps: int = 1) -> SeparationResult:
    """
    Integrate two nearby starts and fit ln|x_a - x_b| against t.

    Args:
        window: (t_start, t_end) for the least-squares fit; defaults to the whole record
    """
    a = np.asarray(x0a, dtype=float)
    b = np.asarray(x0b, dtype=float)
    if np.linalg.norm(a - b) >= 10.0 * min(record.grid.spacing):
        raise ValueError('starting points must lie within 10 grid spacings of each other')
    guidance = _GuidanceField(record, sys)
    ta = integrate_trajectory(record, a, sys, substeps=substeps, guidance=guidance)
    tb = integrate_trajectory(record, b, sys, substeps=substeps, guidance=guidance)
    n = min(len(ta.times), len(tb.times))
    times = ta.times[:n]
    distance = np.linalg.norm(ta.positions[:n] - tb.positions[:n], axis=1)
    reliable = not (ta.truncated or tb.truncated) and bool(np.all(distance > 0))
    log_sep = np.log(np.where(distance > 0, distance, np.finfo(float).tiny))

    lo, hi = window if window is not None else (float(times[0]), float(times[-1]))
    keep = (times >= lo) & (times <= hi)
    slope = float(np.polyfit(times[keep], log_sep[keep], 1)[0]) if np.sum(keep) >= 2 else 0.0
    if not reliable:
        logger.warning("Separation estimate unreliable: a trajectory was truncated or the pair collapsed")
    return SeparationResult(times=times, log_separation=log_sep, slope=slope,
                            window=(float(lo), float(hi)), reliable=reliable)


def sample_starts(psi: ComplexField, count: int, seed: int) -> np.ndarray:
    """Draw start points from |psi|^2 with a seeded generator, jittered within the cell."""
    grid = psi.grid
    weights = (grid.quadrature_weights() * np.abs(psi.values) ** 2).ravel()
    rng = np.random.default_rng(seed)
    picks = rng.choice(weights.size, size=count, p=weights / weights.sum())
    index = np.stack(np.unravel_index(picks, grid.shape), axis=-1)
    jitter = rng.uniform(-0.5, 0.5, size=index.shape)
    lower = np.asarray(grid.lower)
    upper = np.asarray(grid.upper)
    points = lower + (index + jitter) * np.asarray(grid.spacing)
    return np.clip(points, lower, upper)


def trajectory_batch(record: EvolutionRecord, sys: ParticleSystem,
                     starts: Optional[Sequence[Sequence[float]]] = None, count: int = 0,
                     seed: int = 0, workers: int = 1, substeps: int = 1) -> List[Trajectory]:
    """Integrate many trajectories concurrently; output order follows the starts."""
    if starts is None:
        starts = sample_starts(record.snapshots[0], count, seed)
    starts = [np.asarray(s, dtype=float) for s in starts]
    guidance = _GuidanceField(record, sys)
    cap = _default_speed_cap(record, sys, None)
    results: Dict[int, Trajectory] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = {
            executor.submit(integrate_trajectory, record, x0, sys, substeps, cap, None, guidance): k
            for k, x0 in enumerate(starts)
        }
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    logger.info(f"Integrated {len(results)} trajectories")
    return [results[k] for k in range(len(starts))]

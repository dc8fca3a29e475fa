"""Grids, fields, differential operators and the polar decomposition."""

import logging
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import MAX_PDE_DIM, NODE_EPS_REL

logger = logging.getLogger(__name__)

AxesArg = Optional[Union[int, Sequence[int]]]


def _frozen_array(values, dtype) -> np.ndarray:
    """Copy values into a read-only array of the given dtype."""
    array = np.array(values, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


class Boundary(str, Enum):
    """Boundary treatment of a grid."""
    PERIODIC = "periodic"
    DIRICHLET = "dirichlet"


class SpatialGrid(BaseModel):
    """Uniform rectangular discretization of configuration space."""
    model_config = ConfigDict(frozen=True)

    points: Tuple[int, ...] = Field(..., description="Grid points per axis")
    lower: Tuple[float, ...] = Field(..., description="Lower bound per axis")
    upper: Tuple[float, ...] = Field(..., description="Upper bound per axis")
    boundary: Boundary = Field(Boundary.PERIODIC, description="Boundary treatment")

    @field_validator('points')
    @classmethod
    def validate_points(cls, v):
        """Every axis needs at least two samples."""
        if any(n < 2 for n in v):
            raise ValueError('points per axis must be >= 2')
        return v

    @model_validator(mode='after')
    def validate_axes(self):
        """Check axis counts, bounds and the desk-scale dimension cap."""
        if not (len(self.points) == len(self.lower) == len(self.upper)):
            raise ValueError('points, lower and upper must have one entry per axis')
        if not 1 <= len(self.points) <= MAX_PDE_DIM:
            raise ValueError(f'total_dim must be between 1 and {MAX_PDE_DIM}')
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError('upper bound must exceed lower bound on every axis')
        if self.boundary == Boundary.DIRICHLET and any(n < 3 for n in self.points):
            raise ValueError('Dirichlet grids need at least 3 points per axis')
        return self

    @property
    def total_dim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.points)

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def periodic(self) -> bool:
        return self.boundary == Boundary.PERIODIC

    @property
    def spacing(self) -> Tuple[float, ...]:
        if self.periodic:
            return tuple((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.points))
        return tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, k: int) -> np.ndarray:
        """Coordinates along axis k."""
        n = self.points[k]
        return self.lower[k] + self.spacing[k] * np.arange(n)

    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(self.axis(k) for k in range(self.total_dim))

    def mesh(self) -> Tuple[np.ndarray, ...]:
        """Coordinate arrays broadcast to the full grid shape."""
        return tuple(np.meshgrid(*self.axes(), indexing='ij'))

    def wavenumbers(self, k: int) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.points[k], d=self.spacing[k])

    def quadrature_weights(self) -> np.ndarray:
        """Rectangle rule on periodic grids, trapezoid rule on Dirichlet grids."""
        weights = np.full(self.shape, self.cell_volume)
        if self.periodic:
            return weights
        for k in range(self.total_dim):
            edge = np.ones(self.points[k])
            edge[[0, -1]] = 0.5
            shape = [1] * self.total_dim
            shape[k] = -1
            weights = weights * edge.reshape(shape)
        return weights

    def boundary_mask(self) -> np.ndarray:
        """True on pinned boundary points (always empty for periodic grids)."""
        mask = np.zeros(self.shape, dtype=bool)
        if self.periodic:
            return mask
        for k in range(self.total_dim):
            index = [slice(None)] * self.total_dim
            index[k] = [0, -1]
            mask[tuple(index)] = True
        return mask

    def contains(self, point: Sequence[float]) -> bool:
        return all(lo <= x <= hi for x, lo, hi in zip(point, self.lower, self.upper))

    def refined(self) -> "SpatialGrid":
        """The same box with the grid spacing halved."""
        if self.periodic:
            points = tuple(2 * n for n in self.points)
        else:
            points = tuple(2 * n - 1 for n in self.points)
        return self.model_copy(update={'points': points})


class _GridValues(BaseModel):
    """Samples of a quantity on a grid."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: SpatialGrid
    values: np.ndarray
    name: str = "field"

    @model_validator(mode='after')
    def validate_samples(self):
        """Value count must match the grid and every sample must be finite."""
        if self.values.shape != self.grid.shape:
            raise ValueError(f'values shape {self.values.shape} does not match grid {self.grid.shape}')
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f'field {self.name!r} contains non-finite samples')
        return self


class ComplexField(_GridValues):
    """Complex samples of a wavefunction on a grid."""
    name: str = "psi"

    @field_validator('values', mode='before')
    @classmethod
    def coerce_values(cls, v):
        return _frozen_array(v, np.complex128)


class RealField(_GridValues):
    """Real samples on a grid."""

    @field_validator('values', mode='before')
    @classmethod
    def coerce_values(cls, v):
        return _frozen_array(v, np.float64)


class VectorField(BaseModel):
    """Components of a vector quantity over a set of grid axes, with an optional mask."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: SpatialGrid
    axes: Tuple[int, ...]
    components: Tuple[np.ndarray, ...]
    mask: Optional[np.ndarray] = Field(None, description="True where the vector carries no value")

    @field_validator('components', mode='before')
    @classmethod
    def coerce_components(cls, v):
        return tuple(_frozen_array(c, np.result_type(c, np.float64)) for c in v)

    @field_validator('mask', mode='before')
    @classmethod
    def coerce_mask(cls, v):
        return None if v is None else _frozen_array(v, bool)

    @model_validator(mode='after')
    def validate_components(self):
        if len(self.components) != len(self.axes):
            raise ValueError('one component per axis is required')
        for c in self.components:
            if c.shape != self.grid.shape:
                raise ValueError('component shape does not match grid')
        if self.mask is not None and self.mask.shape != self.grid.shape:
            raise ValueError('mask shape does not match grid')
        return self

    def valid(self) -> np.ndarray:
        """Points that carry a value."""
        if self.mask is None:
            return np.ones(self.grid.shape, dtype=bool)
        return ~self.mask

    def magnitude(self) -> np.ndarray:
        return np.sqrt(sum(np.abs(c) ** 2 for c in self.components))

    def stacked(self) -> np.ndarray:
        return np.stack(self.components)


class PolarForm(BaseModel):
    """Amplitude R >= 0 and action-phase S with node masking."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    R: RealField
    S: RealField
    node_mask: np.ndarray
    hbar: float = Field(1.0, gt=0)

    @field_validator('node_mask', mode='before')
    @classmethod
    def coerce_mask(cls, v):
        return _frozen_array(v, bool)

    @model_validator(mode='after')
    def validate_amplitude(self):
        if np.any(self.R.values < 0):
            raise ValueError('R must be nonnegative')
        return self

    @property
    def mask_fraction(self) -> float:
        return float(np.mean(self.node_mask))

    def reconstruct(self) -> ComplexField:
        """R exp(iS/hbar) on the same grid."""
        values = self.R.values * np.exp(1j * self.S.values / self.hbar)
        return ComplexField(grid=self.R.grid, values=values)


Potential = Callable[[Tuple[np.ndarray, ...], float], np.ndarray]


class ParticleSystem(BaseModel):
    """Particle masses, dimensionalities, classical potential and hbar."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    masses: Tuple[float, ...] = Field(..., description="Mass of each particle")
    dims: Tuple[int, ...] = Field(..., description="Spatial dimension of each particle")
    hbar: float = Field(1.0, gt=0, description="Reduced Planck constant")
    potential: Optional[Potential] = Field(None, description="V(coords, t); None means V = 0")
    time_dependent: bool = False

    @field_validator('masses')
    @classmethod
    def validate_masses(cls, v):
        if not v or any(m <= 0 for m in v):
            raise ValueError('all masses must be positive')
        return v

    @field_validator('dims')
    @classmethod
    def validate_dims(cls, v):
        if not v or any(d < 1 for d in v):
            raise ValueError('every particle needs at least one dimension')
        return v

    @model_validator(mode='after')
    def validate_counts(self):
        if len(self.masses) != len(self.dims):
            raise ValueError('masses and dims must have one entry per particle')
        return self

    @property
    def n(self) -> int:
        return len(self.masses)

    @property
    def total_dim(self) -> int:
        return int(sum(self.dims))

    def axes(self, particle: Optional[int] = None) -> Tuple[int, ...]:
        """Grid axes belonging to one particle, or all axes."""
        if particle is None:
            return tuple(range(self.total_dim))
        if not 0 <= particle < self.n:
            raise ValueError(f'particle index {particle} out of range for {self.n} particles')
        offset = int(sum(self.dims[:particle]))
        return tuple(range(offset, offset + self.dims[particle]))

    def axis_masses(self) -> np.ndarray:
        """Mass attached to each grid axis."""
        return np.repeat(np.asarray(self.masses, dtype=float), self.dims)

    def check_grid(self, grid: SpatialGrid) -> None:
        if grid.total_dim != self.total_dim:
            raise ValueError(f'grid has {grid.total_dim} axes but the system needs {self.total_dim}')

    def potential_on(self, grid: SpatialGrid, t: float = 0.0) -> np.ndarray:
        """Classical potential sampled on the grid."""
        self.check_grid(grid)
        if self.potential is None:
            return np.zeros(grid.shape)
        values = np.broadcast_to(np.asarray(self.potential(grid.mesh(), t), dtype=float), grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError('potential is not bounded on the grid')
        return np.array(values)


def _resolve_axes(grid: SpatialGrid, axes: AxesArg) -> Tuple[int, ...]:
    if axes is None:
        return tuple(range(grid.total_dim))
    if isinstance(axes, (int, np.integer)):
        axes = (int(axes),)
    axes = tuple(int(a) for a in axes)
    for a in axes:
        if not 0 <= a < grid.total_dim:
            raise ValueError(f'axis {a} out of range for a {grid.total_dim}-dimensional grid')
    return axes


def _spectral_derivative(values: np.ndarray, grid: SpatialGrid, axis: int, order: int) -> np.ndarray:
    k = grid.wavenumbers(axis)
    if order == 1:
        factor = 1j * k
        n = grid.points[axis]
        if n % 2 == 0:
            # Nyquist mode has no odd derivative on the grid
            factor[n // 2] = 0.0
    else:
        factor = -(k ** 2)
    shape = [1] * values.ndim
    shape[axis] = -1
    out = np.fft.ifft(np.fft.fft(values, axis=axis) * factor.reshape(shape), axis=axis)
    return out if np.iscomplexobj(values) else out.real


def central_difference(values: np.ndarray, grid: SpatialGrid, axis: int, order: int,
                       wrap: Optional[bool] = None) -> np.ndarray:
    """Second-order central stencil; boundary points are pinned to 0 unless wrapped."""
    wrap = grid.periodic if wrap is None else wrap
    h = grid.spacing[axis]
    if wrap:
        fwd = np.roll(values, -1, axis=axis)
        bwd = np.roll(values, 1, axis=axis)
        if order == 1:
            return (fwd - bwd) / (2.0 * h)
        return (fwd - 2.0 * values + bwd) / h ** 2

    def part(sl):
        index = [slice(None)] * values.ndim
        index[axis] = sl
        return tuple(index)

    out = np.zeros_like(values)
    if order == 1:
        out[part(slice(1, -1))] = (values[part(slice(2, None))] - values[part(slice(None, -2))]) / (2.0 * h)
    else:
        out[part(slice(1, -1))] = (values[part(slice(2, None))] - 2.0 * values[part(slice(1, -1))]
                                   + values[part(slice(None, -2))]) / h ** 2
    return out


def derivative_values(values: np.ndarray, grid: SpatialGrid, axis: int, order: int) -> np.ndarray:
    """Derivative along one axis: spectral on periodic grids, central stencil on Dirichlet grids."""
    if grid.periodic:
        return _spectral_derivative(values, grid, axis, order)
    return central_difference(values, grid, axis, order)


def laplacian_values(values: np.ndarray, grid: SpatialGrid, axes: AxesArg = None) -> np.ndarray:
    axes = _resolve_axes(grid, axes)
    return sum(derivative_values(values, grid, a, 2) for a in axes)


def gradient_values(values: np.ndarray, grid: SpatialGrid, axes: AxesArg = None) -> Tuple[np.ndarray, ...]:
    axes = _resolve_axes(grid, axes)
    return tuple(derivative_values(values, grid, a, 1) for a in axes)


def _check_field(f) -> None:
    if not isinstance(f, _GridValues):
        raise ValueError('expected a ComplexField or RealField')


def _axes_for(axes: AxesArg, particle: Optional[int], system: Optional[ParticleSystem]) -> AxesArg:
    if particle is None:
        return axes
    if system is None:
        raise ValueError('a particle index needs the ParticleSystem that owns the axes')
    if axes is not None:
        raise ValueError('give either axes or a particle index, not both')
    return system.axes(particle)


def laplacian(f: Union[ComplexField, RealField], axes: AxesArg = None, particle: Optional[int] = None,
              system: Optional[ParticleSystem] = None):
    """
    Discrete Laplacian over the given axes (all axes by default).

    Args:
        f: field to differentiate
        axes: axis index, sequence of axes or None for all
        particle: restrict to one particle's axes, looked up in system
        system: ParticleSystem mapping particles to grid axes

    Returns:
        Field of the same kind as f
    """
    _check_field(f)
    values = laplacian_values(f.values, f.grid, _axes_for(axes, particle, system))
    return type(f)(grid=f.grid, values=values, name=f"lap_{f.name}")


def gradient(f: Union[ComplexField, RealField], axes: AxesArg = None, particle: Optional[int] = None,
             system: Optional[ParticleSystem] = None) -> VectorField:
    """Per-axis discrete gradient, same discretization policy and axis selection as laplacian."""
    _check_field(f)
    axes = _resolve_axes(f.grid, _axes_for(axes, particle, system))
    components = gradient_values(f.values, f.grid, axes)
    return VectorField(grid=f.grid, axes=axes, components=components)


def default_node_threshold(values: np.ndarray) -> float:
    return NODE_EPS_REL * float(np.max(np.abs(values), initial=0.0))


def node_mask_for(amplitude: np.ndarray, eps_node: Optional[float]) -> np.ndarray:
    """Points whose amplitude lies below eps_node (or is exactly zero)."""
    if eps_node is None:
        eps_node = default_node_threshold(amplitude)
    elif eps_node <= 0:
        raise ValueError('eps_node must be positive')
    return (amplitude < eps_node) | (amplitude == 0.0)


def polar_decompose(psi: ComplexField, eps_node: Optional[float] = None, hbar: float = 1.0) -> PolarForm:
    """
    Split psi into R = |psi| and S = hbar * arg(psi) on the principal branch.

    Args:
        psi: wavefunction samples
        eps_node: absolute node threshold; defaults to NODE_EPS_REL * max|psi|
        hbar: action unit for S
    """
    R = np.abs(psi.values)
    S = hbar * np.angle(psi.values)
    mask = node_mask_for(R, eps_node)
    return PolarForm(
        R=RealField(grid=psi.grid, values=R, name=f"R_{psi.name}"),
        S=RealField(grid=psi.grid, values=S, name=f"S_{psi.name}"),
        node_mask=mask,
        hbar=hbar,
    )


def inner_values(f: np.ndarray, g: np.ndarray, grid: SpatialGrid) -> complex:
    return complex(np.sum(grid.quadrature_weights() * (np.conj(f) * g)))


def inner_product(f: ComplexField, g: ComplexField) -> complex:
    """Quadrature of conj(f) * g over the grid."""
    if f.grid != g.grid:
        raise ValueError('fields live on different grids')
    return inner_values(f.values, g.values, f.grid)


def norm(f: ComplexField) -> float:
    return float(np.sqrt(max(inner_product(f, f).real, 0.0)))


def normalized(f: ComplexField) -> ComplexField:
    n = norm(f)
    if n == 0.0:
        raise ValueError('cannot normalize a zero field')
    return f.model_copy(update={'values': _frozen_array(f.values / n, np.complex128)})

"""Galerkin coefficient flows, state-dependent generators and Lyapunov spectra."""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from enum import Enum
from math import factorial
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import eval_hermite

from .config import (
    BASIS_TOL,
    CHAOS_FLOOR,
    NODE_EPS_REL,
    NONLINEAR_CLAMP,
    ORTHOGONALITY_TOL,
    TANGENT_CONDITION_LIMIT,
    TRANSIENT_FRACTION,
)
from .dynamics import EvolverConfig, evolve_noQ, hamiltonian_values, nonlinear_values
from .errors import NumericalAbort
from .field_core import ComplexField, ParticleSystem, SpatialGrid

logger = logging.getLogger(__name__)

FieldOperator = Callable[[ComplexField], ComplexField]


def _frozen(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


def to_real(a: np.ndarray) -> np.ndarray:
    """Interleave (Re a_0, Im a_0, Re a_1, ...)."""
    x = np.empty(2 * len(a))
    x[0::2] = a.real
    x[1::2] = a.imag
    return x


def to_complex(x: np.ndarray) -> np.ndarray:
    return x[0::2] + 1j * x[1::2]


def complex_jacobian_to_real(A: np.ndarray, B: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Real 2N x 2N Jacobian of f from df = A da + B da*.

    Rows and columns follow the interleaved (Re, Im) layout of to_real.
    """
    B = np.zeros_like(A) if B is None else B
    P = A + B
    Qm = 1j * (A - B)
    n = A.shape[0]
    J = np.empty((2 * n, 2 * n))
    J[0::2, 0::2] = P.real
    J[0::2, 1::2] = Qm.real
    J[1::2, 0::2] = P.imag
    J[1::2, 1::2] = Qm.imag
    return J


class BasisSet(BaseModel):
    """Orthonormal set spanning the truncated Hilbert space."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    N: int = Field(..., ge=2, description="Dimension of the truncated space")
    fields: Optional[Tuple[ComplexField, ...]] = Field(None, description="Grid-backed members, or None for label-only")
    residual: float = Field(0.0, ge=0, description="max |<j|k> - delta_jk|")

    @model_validator(mode='after')
    def validate_members(self):
        if self.fields is not None:
            if len(self.fields) != self.N:
                raise ValueError('one field per basis member is required')
            if any(f.grid != self.fields[0].grid for f in self.fields):
                raise ValueError('basis members live on different grids')
        return self

    @classmethod
    def from_fields(cls, fields: Sequence[ComplexField], tol: float = BASIS_TOL) -> "BasisSet":
        """Build a grid-backed basis, measuring its orthonormality."""
        fields = tuple(fields)
        grid = fields[0].grid
        stack = np.stack([f.values.ravel() for f in fields])
        weights = grid.quadrature_weights().ravel()
        gram = (np.conj(stack) * weights) @ stack.T
        residual = float(np.max(np.abs(gram - np.eye(len(fields)))))
        if residual > tol:
            raise ValueError(f'basis is not orthonormal (residual {residual:.3e} > {tol:.1e})')
        return cls(N=len(fields), fields=fields, residual=residual)

    @property
    def grid(self) -> SpatialGrid:
        if self.fields is None:
            raise ValueError('label-only basis has no grid')
        return self.fields[0].grid

    def matrix(self) -> np.ndarray:
        """(N, grid.size) array of member samples."""
        return np.stack([f.values.ravel() for f in self.fields])

    def reconstruct(self, a: np.ndarray) -> ComplexField:
        values = (np.asarray(a) @ self.matrix()).reshape(self.grid.shape)
        return ComplexField(grid=self.grid, values=values)

    def project(self, psi: ComplexField) -> np.ndarray:
        """Coefficients <phi_j|psi>."""
        weights = self.grid.quadrature_weights().ravel()
        return (np.conj(self.matrix()) * weights) @ psi.values.ravel()


def oscillator_eigenfunction(x: np.ndarray, n: int, mass: float = 1.0, omega: float = 1.0,
                             hbar: float = 1.0, center: float = 0.0) -> np.ndarray:
    """Normalized n-th harmonic-oscillator eigenfunction sampled at x."""
    alpha = mass * omega / hbar
    xi = np.sqrt(alpha) * (np.asarray(x) - center)
    prefactor = (alpha / np.pi) ** 0.25 / np.sqrt(2.0 ** n * factorial(n))
    return prefactor * eval_hermite(n, xi) * np.exp(-xi ** 2 / 2)


def oscillator_basis(grid: SpatialGrid, N: int, mass: float = 1.0, omega: float = 1.0,
                     hbar: float = 1.0, center: float = 0.0) -> BasisSet:
    """Lowest N harmonic-oscillator eigenstates on a 1D grid."""
    if grid.total_dim != 1:
        raise ValueError('oscillator_basis needs a 1D grid')
    fields = [
        ComplexField(grid=grid, values=oscillator_eigenfunction(grid.axis(0), n, mass, omega, hbar, center),
                     name=f"ho_{n}")
        for n in range(N)
    ]
    return BasisSet.from_fields(fields)


def plane_wave_basis(grid: SpatialGrid, modes: Sequence[int]) -> BasisSet:
    """exp(i 2 pi n x / L) / sqrt(L) for the given mode numbers on a periodic 1D grid."""
    if grid.total_dim != 1 or not grid.periodic:
        raise ValueError('plane_wave_basis needs a periodic 1D grid')
    length = grid.upper[0] - grid.lower[0]
    x = grid.axis(0) - grid.lower[0]
    fields = [
        ComplexField(grid=grid, values=np.exp(2j * np.pi * n * x / length) / np.sqrt(length), name=f"k_{n}")
        for n in modes
    ]
    return BasisSet.from_fields(fields)


class CoefficientState(BaseModel):
    """Expansion coefficients a_j at time t."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    a: np.ndarray
    t: float = 0.0

    @field_validator('a', mode='before')
    @classmethod
    def coerce_a(cls, v):
        return _frozen(v, np.complex128)

    @model_validator(mode='after')
    def validate_finite(self):
        if self.a.ndim != 1 or not np.all(np.isfinite(self.a)):
            raise ValueError('coefficients must be a finite vector')
        return self

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.a))


class RealFlow(BaseModel):
    """Autonomous real flow dx/dt = f(x) with an optional analytic Jacobian."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dim: int = Field(..., ge=1)
    rhs: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    constant_jacobian: bool = Field(False, description="Jacobian does not depend on x")
    fd_step: float = Field(1e-6, gt=0, description="Relative central-difference step")

    def jacobian_at(self, x: np.ndarray) -> np.ndarray:
        if self.jacobian is not None:
            return self.jacobian(x)
        h = self.fd_step * (1.0 + np.linalg.norm(x))
        J = np.empty((self.dim, self.dim))
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            J[:, k] = (self.rhs(x + e) - self.rhs(x - e)) / (2.0 * h)
        return J

    def divergence(self, x: np.ndarray) -> float:
        """Trace of the Jacobian: local phase-space volume growth rate."""
        return float(np.trace(self.jacobian_at(x)))


def linear_real_flow(matrix: np.ndarray) -> RealFlow:
    """dx/dt = A x."""
    A = _frozen(matrix, float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError('linear flow needs a square matrix')
    return RealFlow(dim=A.shape[0], rhs=lambda x: A @ x, jacobian=lambda x: A, constant_jacobian=True)


class GeneratorKind(str, Enum):
    CONSTANT = "constant"
    STATE_DEPENDENT = "state_dependent"


class Generator(BaseModel):
    """M in da/dt = M a, either fixed or a deterministic function of a."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: GeneratorKind
    N: int = Field(..., ge=2)
    hbar: float = Field(1.0, gt=0)
    matrix: Optional[np.ndarray] = None
    callback: Optional[Callable[[np.ndarray], np.ndarray]] = Field(None, description="a -> M(a)")
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = Field(
        None, description="Analytic real 2N x 2N Jacobian of the flow, interleaved layout")
    macroscopic: Dict[str, Callable[[np.ndarray], complex]] = Field(default_factory=dict)

    @field_validator('matrix', mode='before')
    @classmethod
    def coerce_matrix(cls, v):
        return None if v is None else _frozen(v, np.complex128)

    @model_validator(mode='after')
    def validate_kind(self):
        if self.kind == GeneratorKind.CONSTANT:
            if self.matrix is None or self.matrix.shape != (self.N, self.N):
                raise ValueError('a constant generator needs an N x N matrix')
        elif self.callback is None:
            raise ValueError('a state-dependent generator needs a callback')
        return self

    def M(self, a: np.ndarray) -> np.ndarray:
        if self.kind == GeneratorKind.CONSTANT:
            return self.matrix
        return np.asarray(self.callback(np.asarray(a)), dtype=complex)

    def hamiltonian(self, a: np.ndarray) -> np.ndarray:
        """H(a) = i hbar M(a)."""
        return 1j * self.hbar * self.M(a)

    def rhs(self, a: np.ndarray) -> np.ndarray:
        return self.M(a) @ a

    def anti_hermitian_residual(self, a: Optional[np.ndarray] = None) -> float:
        M = self.M(np.zeros(self.N, dtype=complex) if a is None else a)
        return float(np.max(np.abs(M + M.conj().T)))

    def real_flow(self) -> RealFlow:
        """The equivalent 2N-dimensional real flow."""
        def rhs(x):
            return to_real(self.rhs(to_complex(x)))

        if self.kind == GeneratorKind.CONSTANT:
            J = complex_jacobian_to_real(self.matrix)
            return RealFlow(dim=2 * self.N, rhs=rhs, jacobian=lambda x: J, constant_jacobian=True)
        return RealFlow(dim=2 * self.N, rhs=rhs, jacobian=self.jacobian)


def galerkin_project(H: FieldOperator, basis: BasisSet, sys: ParticleSystem,
                     tol: float = BASIS_TOL) -> Generator:
    """Constant generator M_jk = <phi_j|H phi_k> / (i hbar)."""
    if basis.fields is None:
        raise ValueError('galerkin_project needs a grid-backed basis')
    if basis.residual > tol:
        raise ValueError(f'basis is not orthonormal (residual {basis.residual:.3e})')
    images = np.stack([H(f).values.ravel() for f in basis.fields])
    weights = basis.grid.quadrature_weights().ravel()
    elements = (np.conj(basis.matrix()) * weights) @ images.T
    return Generator(kind=GeneratorKind.CONSTANT, N=basis.N, hbar=sys.hbar,
                     matrix=elements / (1j * sys.hbar))


def hamiltonian_operator(sys: ParticleSystem, t: float = 0.0) -> FieldOperator:
    """The linear Hamiltonian as a field-to-field map."""
    def apply(f: ComplexField) -> ComplexField:
        V = sys.potential_on(f.grid, t)
        return ComplexField(grid=f.grid, values=hamiltonian_values(f.values, f.grid, sys, V), name=f"H_{f.name}")
    return apply


def _lowering(N: int) -> np.ndarray:
    return np.eye(N, k=1)


def order_parameter(a: np.ndarray) -> complex:
    """Delta(a) = sum_j conj(a_j) a_{j+1}."""
    return complex(np.vdot(a[:-1], a[1:]))


def default_energies(N: int) -> List[float]:
    """E_0 = 0, E_j = j - 1 + sqrt(j): incommensurate level spacings."""
    return [0.0] + [j - 1.0 + float(np.sqrt(j)) for j in range(1, N)]


def toy_nonlinear_generator(N: int, g: float, energies: Sequence[float], hbar: float = 1.0) -> Generator:
    """
    H(a) = diag(E) + g (Delta(a) L + conj(Delta(a)) L^T), M(a) = H(a) / (i hbar).

    L has ones on the first superdiagonal. M(a) is anti-Hermitian for every a.
    """
    if N < 3:
        raise ValueError('the toy generator needs N >= 3')
    E = np.asarray(energies, dtype=float)
    if E.shape != (N,):
        raise ValueError(f'expected {N} base energies')
    L = _lowering(N)
    base = np.diag(E).astype(complex)

    def callback(a):
        delta = order_parameter(a)
        return (base + g * (delta * L + np.conj(delta) * L.T)) / (1j * hbar)

    def jacobian(x):
        a = to_complex(x)
        delta = order_parameter(a)
        La = L @ a
        LTa = L.T @ a
        A = base + g * (delta * L + np.conj(delta) * L.T) \
            + g * (np.outer(La, L.T @ np.conj(a)) + np.outer(LTa, L @ np.conj(a)))
        B = g * (np.outer(La, La) + np.outer(LTa, LTa))
        return complex_jacobian_to_real(A / (1j * hbar), B / (1j * hbar))

    if g == 0:
        return Generator(kind=GeneratorKind.CONSTANT, N=N, hbar=hbar, matrix=base / (1j * hbar),
                         macroscopic={'order_parameter': order_parameter})
    return Generator(kind=GeneratorKind.STATE_DEPENDENT, N=N, hbar=hbar, callback=callback,
                     jacobian=jacobian, macroscopic={'order_parameter': order_parameter})


def noQ_flow_generator(basis: BasisSet, sys: ParticleSystem, eps_node_rel: float = NODE_EPS_REL,
                       clamp: float = NONLINEAR_CLAMP) -> Generator:
    """
    State-dependent generator of the Q-removed flow: H(a) = H_linear + W(psi_a), projected on the basis.

    psi_a = sum_j a_j phi_j is rebuilt on the grid at every evaluation.
    """
    linear = galerkin_project(hamiltonian_operator(sys), basis, sys).matrix * (1j * sys.hbar)
    grid = basis.grid
    phi = basis.matrix()
    weighted_conj = np.conj(phi) * grid.quadrature_weights().ravel()

    def callback(a):
        values = (a @ phi).reshape(grid.shape)
        W, mask = nonlinear_values(values, grid, sys, eps_node_rel, clamp)
        if np.all(mask):
            raise ValueError('reconstructed state is fully node-masked')
        H = linear + (weighted_conj * W.ravel()) @ phi.T
        return H / (1j * sys.hbar)

    return Generator(kind=GeneratorKind.STATE_DEPENDENT, N=basis.N, hbar=sys.hbar, callback=callback)


def integrate_flow(gen: Generator, a0: CoefficientState, dt: float, steps: int,
                   record_stride: int = 1) -> List[CoefficientState]:
    """RK4 integration of da/dt = M(a) a; the norm is tracked, never enforced."""
    if dt <= 0:
        raise ValueError('dt must be positive')
    if steps < 0 or record_stride < 1:
        raise ValueError('steps must be nonnegative and record_stride >= 1')
    if a0.a.shape != (gen.N,):
        raise ValueError(f'initial state has {a0.a.size} coefficients, generator expects {gen.N}')
    a = np.array(a0.a)
    states = [a0]
    for n in range(1, steps + 1):
        k1 = gen.rhs(a)
        k2 = gen.rhs(a + 0.5 * dt * k1)
        k3 = gen.rhs(a + 0.5 * dt * k2)
        k4 = gen.rhs(a + dt * k3)
        a = a + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if not np.all(np.isfinite(a)):
            raise NumericalAbort("non-finite coefficients in flow integration", step=n)
        if n % record_stride == 0:
            states.append(CoefficientState(a=a, t=a0.t + n * dt))
    return states


def galerkin_consistency(basis: BasisSet, sys: ParticleSystem, psi0: ComplexField, cfg: EvolverConfig,
                         steps: int) -> np.ndarray:
    """
    Coefficient deviation between the basis flow and the grid no-Q evolution, per snapshot.

    Both runs start from the projection of psi0 onto the basis. The grid run is projected
    back at every snapshot; the result holds max_j |a_j - <phi_j|psi>|.
    Node-free states keep W smooth and the deviation small; at nodes |psi| has kinks
    whose W content the truncated basis cannot hold.
    """
    if psi0.grid != basis.grid:
        raise ValueError('initial state and basis live on different grids')
    a0 = CoefficientState(a=basis.project(psi0))
    start = basis.reconstruct(a0.a)
    record = evolve_noQ(start, sys, cfg, steps)
    gen = noQ_flow_generator(basis, sys, cfg.eps_node_rel, cfg.nonlinear_clamp)
    states = integrate_flow(gen, a0, cfg.dt, steps, cfg.record_stride)
    return np.array([float(np.max(np.abs(s.a - basis.project(snap))))
                     for s, snap in zip(states, record.snapshots)])


def macroscopic_series(gen: Generator, states: Sequence[CoefficientState]) -> Dict[str, np.ndarray]:
    """Time series of every macroscopic variable the generator declares."""
    return {name: np.array([fn(s.a) for s in states]) for name, fn in gen.macroscopic.items()}


class LyapunovResult(BaseModel):
    """Lyapunov spectrum of a real flow with its convergence history."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spectrum: np.ndarray = Field(..., description="Exponents, descending")
    history: np.ndarray = Field(..., description="(events, dim) running averages, columns in spectrum order")
    history_times: np.ndarray
    transient_steps: int
    span: float = Field(..., description="Time span entering the averages")
    dt: float
    steps: int
    renorm_stride: int

    @model_validator(mode='after')
    def validate_spectrum(self):
        if np.any(np.diff(self.spectrum) > 0):
            raise ValueError('spectrum must be sorted in descending order')
        if len(self.history) == 0:
            raise ValueError('history must not be empty')
        return self

    @property
    def largest(self) -> float:
        return float(self.spectrum[0])


def _gram_schmidt(Y: np.ndarray, step: int) -> Tuple[np.ndarray, np.ndarray]:
    """Classical Gram-Schmidt on the columns of Y, with a second pass on orthogonality loss."""
    d = Y.shape[1]
    Qm = np.empty_like(Y)
    r = np.empty(d)
    for k in range(d):
        v = Y[:, k].copy()
        basis = Qm[:, :k]
        v -= basis @ (basis.T @ v)
        size = np.linalg.norm(v)
        if k and size > 0 and np.max(np.abs(basis.T @ v)) > ORTHOGONALITY_TOL * size:
            v -= basis @ (basis.T @ v)
            size = np.linalg.norm(v)
        if not size > 0 or not np.isfinite(size):
            raise NumericalAbort("tangent vectors collapsed during reorthonormalization", step=step)
        r[k] = size
        Qm[:, k] = v / size
    return Qm, r


def lyapunov_spectrum(gen: Union[Generator, RealFlow], a0: Union[CoefficientState, np.ndarray],
                      dt: float, steps: int, renorm_stride: int = 1,
                      transient_fraction: float = TRANSIENT_FRACTION) -> LyapunovResult:
    """
    Lyapunov exponents from tangent vectors propagated with the flow Jacobian.

    Args:
        gen: complex generator (integrated as its real 2N flow) or a RealFlow
        a0: initial coefficients, or a real start vector for a RealFlow
        dt: RK4 step
        steps: total steps, the first transient_fraction of which are not averaged
        renorm_stride: steps between Gram-Schmidt reorthonormalizations

    Raises:
        NumericalAbort: non-finite flow or collapsed tangent vectors
    """
    if dt <= 0 or renorm_stride < 1:
        raise ValueError('dt must be positive and renorm_stride >= 1')
    if not 0 <= transient_fraction < 1:
        raise ValueError('transient_fraction must lie in [0, 1)')
    flow = gen.real_flow() if isinstance(gen, Generator) else gen
    if isinstance(a0, CoefficientState):
        x = to_real(np.asarray(a0.a))
    else:
        x = np.asarray(a0, dtype=float)
    if x.shape != (flow.dim,):
        raise ValueError(f'start vector has dimension {x.size}, flow has {flow.dim}')
    transient = int(transient_fraction * steps)
    if steps - transient < renorm_stride:
        raise ValueError('too few steps after the transient for a single reorthonormalization')

    d = flow.dim
    Y = np.eye(d)
    J_const = flow.jacobian_at(x) if flow.constant_jacobian else None

    def tangent(point, vectors):
        J = J_const if J_const is not None else flow.jacobian_at(point)
        return J @ vectors

    sums = np.zeros(d)
    elapsed = 0.0
    history, history_times = [], []
    for n in range(1, steps + 1):
        k1x, k1y = flow.rhs(x), tangent(x, Y)
        x2, Y2 = x + 0.5 * dt * k1x, Y + 0.5 * dt * k1y
        k2x, k2y = flow.rhs(x2), tangent(x2, Y2)
        x3, Y3 = x + 0.5 * dt * k2x, Y + 0.5 * dt * k2y
        k3x, k3y = flow.rhs(x3), tangent(x3, Y3)
        x4, Y4 = x + dt * k3x, Y + dt * k3y
        k4x, k4y = flow.rhs(x4), tangent(x4, Y4)
        x = x + dt * (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
        Y = Y + dt * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(Y))):
            raise NumericalAbort("non-finite state in Lyapunov integration", step=n)
        if n % renorm_stride:
            continue
        if np.linalg.cond(Y) > TANGENT_CONDITION_LIMIT:
            raise NumericalAbort("tangent vectors collapsed (condition number overflow)", step=n)
        Y, r = _gram_schmidt(Y, n)
        if n <= transient:
            continue
        sums += np.log(r)
        elapsed += renorm_stride * dt
        history.append(sums / elapsed)
        history_times.append(n * dt)

    history = np.array(history)
    order = np.argsort(-history[-1], kind='stable')
    spectrum = history[-1][order]
    logger.debug(f"Lyapunov spectrum over span {elapsed:.4g}: {np.array2string(spectrum, precision=5)}")
    return LyapunovResult(
        spectrum=spectrum,
        history=history[:, order],
        history_times=np.array(history_times),
        transient_steps=transient,
        span=elapsed,
        dt=dt,
        steps=steps,
        renorm_stride=renorm_stride,
    )


class SweepEntry(BaseModel):
    """Largest exponent for one parameter value and its refinement checks."""
    model_config = ConfigDict(frozen=True)

    parameter: float
    largest: float
    largest_half_dt: float
    largest_double_steps: float
    consistent: bool
    chaotic: bool


def refinement_consistent(values: Sequence[float], floor: float = CHAOS_FLOOR) -> bool:
    """Estimates agree within a factor 2 with matching sign, or all lie below the floor."""
    values = np.asarray(values, dtype=float)
    if np.all(np.abs(values) < floor):
        return True
    base = values[0]
    for other in values[1:]:
        if np.sign(other) != np.sign(base) or base == 0:
            return False
        ratio = other / base
        if not 0.5 <= ratio <= 2.0:
            return False
    return True


def lyapunov_sweep(make_generator: Callable[[float], Generator], parameters: Sequence[float],
                   a0: CoefficientState, dt: float, steps: int, renorm_stride: int = 1,
                   transient_fraction: float = TRANSIENT_FRACTION, workers: int = 1) -> List[SweepEntry]:
    """Largest exponent per parameter at (dt, steps), (dt/2, 2 steps) and (dt, 2 steps)."""
    runs = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = {}
        for p in parameters:
            gen = make_generator(p)
            for label, (h, n) in {'base': (dt, steps), 'half_dt': (0.5 * dt, 2 * steps),
                                  'double_steps': (dt, 2 * steps)}.items():
                future = executor.submit(lyapunov_spectrum, gen, a0, h, n, renorm_stride, transient_fraction)
                futures[future] = (p, label)
        for future in as_completed(futures):
            runs[futures[future]] = future.result().largest

    entries = []
    for p in parameters:
        values = [runs[(p, 'base')], runs[(p, 'half_dt')], runs[(p, 'double_steps')]]
        consistent = refinement_consistent(values)
        chaotic = consistent and min(values) > CHAOS_FLOOR
        entries.append(SweepEntry(parameter=p, largest=values[0], largest_half_dt=values[1],
                                  largest_double_steps=values[2], consistent=consistent, chaotic=chaotic))
        logger.info(f"Sweep parameter {p}: largest exponent {values[0]:.5f} "
                    f"(consistent={consistent}, chaotic={chaotic})")
    return entries

"""
Periodic grids and finite difference stencils

Constant coefficient difference operators on a periodic grid are circular
convolutions. A ConvKernel lists the stencil coefficients a_k that multiply
u_{i+k} for k = -m..m, so the central difference reads [-1/(2h), 0, 1/(2h)].
In convolution form out_i = sum_j w_j u_{i-j} this is w_j = a_{-j}; the
symmetric and skew constraints look the same in either form.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from phnn.common.errors import (
    InvalidGridError,
    KernelTooWideError,
    ShapeError,
    SingularOperatorError,
)

logger = logging.getLogger("phnn")

CONSTRAINTS = ("free", "symmetric", "skew", "zero", "identity")

# relative eigenvalue magnitude below which a circulant counts as singular
SINGULAR_TOLERANCE = 1e-12


######################################################################
#  P E R I O D I C   G R I D
######################################################################
@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic mesh with M nodes x_i = i*h on [0, P)"""

    M: int
    P: float

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 3:
            raise InvalidGridError(f"A periodic grid needs at least 3 nodes, got M={self.M}")
        if not np.isfinite(self.P) or self.P <= 0:
            raise InvalidGridError(f"The period must be a positive number, got P={self.P}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "P", float(self.P))

    def __repr__(self):
        return f"<PeriodicGrid M={self.M} P={self.P}>"

    @property
    def h(self) -> float:
        """Grid spacing"""
        return self.P / self.M

    @property
    def kappa(self) -> np.ndarray:
        """Quadrature weights, uniform on a periodic grid"""
        return np.full(self.M, self.h)

    @property
    def x(self) -> np.ndarray:
        """Node coordinates"""
        return np.arange(self.M) * self.h

    def fourier_features(self, x=None) -> np.ndarray:
        """The first two Fourier modes sin(2 pi x/P), cos(2 pi x/P) as a (2, M) array"""
        x = self.x if x is None else np.asarray(x, dtype=float)
        angle = 2.0 * np.pi * x / self.P
        return np.stack([np.sin(angle), np.cos(angle)])

    def refine(self, factor: int) -> "PeriodicGrid":
        """Returns the grid with `factor` times as many nodes on the same period"""
        return PeriodicGrid(self.M * int(factor), self.P)


def make_grid(M: int, P: float) -> PeriodicGrid:
    """Creates a uniform periodic grid, rejecting fewer than three nodes"""
    return PeriodicGrid(M, P)


######################################################################
#  C O N V O L U T I O N   K E R N E L S
######################################################################
@dataclass(frozen=True, eq=False)
class ConvKernel:
    """Odd width stencil with a symmetry constraint tag"""

    weights: np.ndarray
    constraint: str = "free"

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if weights.size % 2 == 0:
            raise ShapeError(f"Kernel width must be odd, got {weights.size}")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        if self.constraint not in CONSTRAINTS:
            raise ShapeError(f"Unknown kernel constraint '{self.constraint}'")
        self._check_constraint()

    def _check_constraint(self):
        w = self.weights
        m = self.halfwidth
        if self.constraint == "symmetric" and not np.array_equal(w, w[::-1]):
            raise ShapeError(f"Kernel {w} is not symmetric")
        if self.constraint == "skew" and not np.array_equal(w, -w[::-1]):
            raise ShapeError(f"Kernel {w} is not skew-symmetric")
        if self.constraint == "zero" and np.any(w != 0.0):
            raise ShapeError(f"Kernel {w} is not the zero kernel")
        if self.constraint == "identity":
            expected = np.zeros_like(w)
            expected[m] = 1.0
            if not np.array_equal(w, expected):
                raise ShapeError(f"Kernel {w} is not the identity kernel")

    def __repr__(self):
        return f"<ConvKernel {self.constraint} {list(self.weights)}>"

    def __eq__(self, other):
        if not isinstance(other, ConvKernel):
            return NotImplemented
        return self.constraint == other.constraint and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.constraint, self.weights.tobytes()))

    @property
    def halfwidth(self) -> int:
        """m for a kernel of width 2m+1"""
        return (self.weights.size - 1) // 2

    @property
    def width(self) -> int:
        """Number of stencil entries"""
        return self.weights.size

    def offsets(self) -> range:
        """Offsets k = -m..m in the order of the weights"""
        return range(-self.halfwidth, self.halfwidth + 1)

    def transpose(self) -> "ConvKernel":
        """The reflected stencil, i.e. the adjoint under uniform weights"""
        return ConvKernel(self.weights[::-1], self.constraint)

    def scaled(self, factor: float) -> "ConvKernel":
        """Returns factor * kernel, keeping the constraint when it survives scaling"""
        constraint = self.constraint
        if constraint == "identity":
            constraint = "symmetric" if factor != 1.0 else "identity"
        if factor == 0.0:
            constraint = "zero"
        return ConvKernel(factor * self.weights, constraint)

    @classmethod
    def identity(cls) -> "ConvKernel":
        """The width one identity stencil"""
        return cls([1.0], "identity")

    @classmethod
    def zero(cls, halfwidth: int = 0) -> "ConvKernel":
        """The zero stencil"""
        return cls(np.zeros(2 * halfwidth + 1), "zero")


def central_difference(h: float) -> ConvKernel:
    """delta_c u_i = (u_{i+1} - u_{i-1}) / (2h)"""
    return ConvKernel([-0.5 / h, 0.0, 0.5 / h], "skew")


def second_difference(h: float) -> ConvKernel:
    """delta_c^2 u_i = (u_{i+1} - 2 u_i + u_{i-1}) / h^2"""
    return ConvKernel([1.0 / h**2, -2.0 / h**2, 1.0 / h**2], "symmetric")


def forward_difference(h: float) -> ConvKernel:
    """delta_f u_i = (u_{i+1} - u_i) / h"""
    return ConvKernel([0.0, -1.0 / h, 1.0 / h], "free")


def _check_width(kernel: ConvKernel, M: int):
    if M < kernel.width:
        raise KernelTooWideError(
            f"Kernel of width {kernel.width} does not fit on a grid with M={M} nodes"
        )


def stencil_apply(kernel: ConvKernel, u) -> np.ndarray:
    """Applies the stencil along the last axis with periodic wraparound"""
    u = np.asarray(u, dtype=float)
    _check_width(kernel, u.shape[-1])
    out = np.zeros_like(u)
    for k, a_k in zip(kernel.offsets(), kernel.weights):
        if a_k != 0.0:
            out += a_k * np.roll(u, -k, axis=-1)
    return out


######################################################################
#  C I R C U L A N T   M A T R I C E S
######################################################################
@dataclass(frozen=True, eq=False)
class CirculantMatrix:
    """The M x M matrix of a stencil under periodic wraparound"""

    kernel: ConvKernel
    M: int

    @property
    def first_column(self) -> np.ndarray:
        """Column zero, c_n = a_{-n}; scipy builds circulants from it"""
        column = np.zeros(self.M)
        for k, a_k in zip(self.kernel.offsets(), self.kernel.weights):
            column[(-k) % self.M] += a_k
        return column

    @property
    def first_row(self) -> np.ndarray:
        """Row zero, r_n = a_n"""
        row = np.zeros(self.M)
        for k, a_k in zip(self.kernel.offsets(), self.kernel.weights):
            row[k % self.M] += a_k
        return row

    def dense(self) -> np.ndarray:
        """Dense matrix representation"""
        return scipy.linalg.circulant(self.first_column)

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues, the discrete Fourier transform of the first column"""
        return np.fft.fft(self.first_column)

    def matvec(self, u) -> np.ndarray:
        """Matrix-vector product"""
        return self.dense() @ np.asarray(u, dtype=float)

    def transpose(self) -> "CirculantMatrix":
        """Transposed matrix, generated by the reflected stencil"""
        return CirculantMatrix(self.kernel.transpose(), self.M)


def circulant_matrix(kernel: ConvKernel, M: int) -> CirculantMatrix:
    """Builds the circulant matrix whose product equals stencil_apply"""
    _check_width(kernel, M)
    return CirculantMatrix(kernel, int(M))


@lru_cache(maxsize=64)
def _factorize(weights: tuple, constraint: str, M: int):
    kernel = ConvKernel(np.array(weights), constraint)
    matrix = CirculantMatrix(kernel, M)
    magnitude = np.abs(matrix.eigenvalues())
    largest = magnitude.max()
    if largest == 0.0 or magnitude.min() < SINGULAR_TOLERANCE * largest:
        raise SingularOperatorError(
            f"Circulant operator of kernel {list(kernel.weights)} is singular on M={M}",
            kernel=kernel,
        )
    return scipy.linalg.lu_factor(matrix.dense())


def solve_circulant(kernel: ConvKernel, b, transpose: bool = False) -> np.ndarray:
    """
    Solves C y = b (or C^T y = b) for the circulant C of the kernel

    The solve runs along the last axis of b so a batch of right hand sides
    shares one LU factorization.
    """
    b = np.asarray(b, dtype=float)
    M = b.shape[-1]
    _check_width(kernel, M)
    if kernel.constraint == "identity":
        return b.copy()
    lu_piv = _factorize(tuple(kernel.weights), kernel.constraint, M)
    columns = b.reshape(-1, M).T
    solution = scipy.linalg.lu_solve(lu_piv, columns, trans=1 if transpose else 0)
    return solution.T.reshape(b.shape)


######################################################################
#  D I S C R E T E   I N N E R   P R O D U C T
######################################################################
def discrete_inner(u, v, grid: PeriodicGrid):
    """Quadrature inner product sum_i kappa_i u_i v_i along the last axis"""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.shape[-1] != grid.M:
        raise ShapeError(f"Cannot take inner product of shapes {u.shape} and {v.shape} on M={grid.M}")
    result = np.sum(grid.kappa * u * v, axis=-1)
    return float(result) if np.ndim(result) == 0 else result


def discrete_norm(u, grid: PeriodicGrid):
    """L2 norm induced by discrete_inner"""
    return np.sqrt(discrete_inner(u, u, grid))

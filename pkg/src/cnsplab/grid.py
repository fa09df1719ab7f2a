"""Periodic spectral lattice: wavenumbers, transforms, projectors, dealiasing.

Conventions used throughout the package:

* physical fields live on the uniform lattice of ``[0, L)^d`` with ``n``
  points per axis; spectral fields hold the coefficients of
  ``f(x) = sum_k fhat_k exp(i k.x)`` (so ``forward(cos(k.x))`` puts 1/2 at
  ``+-k`` and derivatives are multiplication by ``i k``),
* quadrature norms are plain lattice sums, ``||f||_p = ((L/n)^d sum |f|^p)^{1/p}``,
  which for periodic fields coincide with the trapezoidal rule,
* vector fields are stored component-first, shape ``(d, n, ..., n)``.

The zero mode is handled by convention: the solenoidal projector P passes it
through unchanged and the compressible projector Q zeroes it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

_MAGIC = b"CNSP1"


@dataclass(frozen=True)
class Grid:
    """Spectral lattice for a periodic box ``[0, box_length)^dim``."""

    dim: int
    n_per_dim: int
    box_length: float
    k1: np.ndarray = field(repr=False, compare=False, default=None)
    ks: tuple = field(repr=False, compare=False, default=None)
    xi2: np.ndarray = field(repr=False, compare=False, default=None)
    xi: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def shape(self):
        return (self.n_per_dim,) * self.dim

    @property
    def dx(self) -> float:
        return self.box_length / self.n_per_dim

    @property
    def xi_min(self) -> float:
        """Smallest nonzero |xi| on the lattice (one lattice spacing)."""
        return 2.0 * np.pi / self.box_length

    @property
    def xi_max(self) -> float:
        """Largest |xi| on the lattice (corner of the Nyquist cube)."""
        return np.sqrt(self.dim) * np.pi * self.n_per_dim / self.box_length

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dim

    def coordinates(self):
        """Physical coordinate arrays, shape (dim, n, ..., n)."""
        x1 = np.arange(self.n_per_dim) * self.dx
        return np.stack(np.meshgrid(*([x1] * self.dim), indexing="ij"))


def make_grid(dim: int, n_per_dim: int, box_length: float) -> Grid:
    """Build a grid; n_per_dim must be a power of two >= 8."""
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    if n_per_dim < 8 or (n_per_dim & (n_per_dim - 1)) != 0:
        raise ValueError(f"n_per_dim must be a power of two >= 8, got {n_per_dim}")
    if not box_length > 0:
        raise ValueError(f"box_length must be positive, got {box_length}")
    k1 = 2.0 * np.pi * np.fft.fftfreq(n_per_dim, d=box_length / n_per_dim)
    ks = tuple(np.meshgrid(*([k1] * dim), indexing="ij"))
    xi2 = sum(k * k for k in ks)
    return Grid(dim, n_per_dim, float(box_length), k1, ks, xi2, np.sqrt(xi2))


# ----------------------------------------------------------------------
# transforms
# ----------------------------------------------------------------------

def _check_rank(grid: Grid, values: np.ndarray) -> int:
    shape = tuple(values.shape)
    if shape == grid.shape:
        return 0
    if shape == (grid.dim,) + grid.shape:
        return 1
    if shape == (grid.dim, grid.dim) + grid.shape:
        return 2
    raise ValueError(f"field shape {shape} does not match grid {grid.shape}")


def forward(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Physical -> spectral; coefficients of exp(i k.x)."""
    rank = _check_rank(grid, values)
    axes = tuple(range(rank, rank + grid.dim))
    return np.fft.fftn(values, axes=axes) / grid.n_per_dim ** grid.dim


def inverse(grid: Grid, coef: np.ndarray) -> np.ndarray:
    """Spectral -> physical; returns the real part (fields are real)."""
    rank = _check_rank(grid, coef)
    axes = tuple(range(rank, rank + grid.dim))
    return np.fft.ifftn(coef * grid.n_per_dim ** grid.dim, axes=axes).real


def hermitian_defect(grid: Grid, coef: np.ndarray) -> float:
    """Max |coef(-k) - conj(coef(k))|; zero for transforms of real fields."""
    rank = _check_rank(grid, coef)
    axes = tuple(range(rank, rank + grid.dim))
    mirrored = coef
    for ax in axes:
        mirrored = np.roll(np.flip(mirrored, axis=ax), 1, axis=ax)
    return float(np.max(np.abs(mirrored - np.conj(coef))))


# ----------------------------------------------------------------------
# incompressible / compressible split
# ----------------------------------------------------------------------

def apply_projector(grid: Grid, which: str, u_hat: np.ndarray) -> np.ndarray:
    """Leray projectors in spectral space.

    P removes the gradient part, ``P u = u - xi (xi.u)/|xi|^2`` for ``xi != 0``;
    Q = Id - P keeps it.  The zero mode goes to P entirely.
    """
    if which not in ("P", "Q"):
        raise ValueError("projector must be 'P' or 'Q'")
    if u_hat.shape != (grid.dim,) + grid.shape:
        raise ValueError("apply_projector expects a spectral vector field")
    xi2 = np.where(grid.xi2 > 0, grid.xi2, 1.0)
    div = sum(grid.ks[c] * u_hat[c] for c in range(grid.dim))
    q = np.stack([grid.ks[c] * div / xi2 for c in range(grid.dim)])
    zero = grid.xi2 == 0
    q[:, zero] = 0.0
    if which == "Q":
        return q
    return u_hat - q


def dealias_mask(grid: Grid, rule: str = "two_thirds") -> np.ndarray:
    """Boolean mask keeping modes with |k_i| <= (n/3)*(2*pi/L) on every axis."""
    if rule != "two_thirds":
        raise ValueError(f"unknown dealias rule {rule!r}")
    kcut = (grid.n_per_dim / 3.0) * (2.0 * np.pi / grid.box_length)
    keep1 = np.abs(grid.k1) <= kcut * (1.0 + 1e-12)
    mask = None
    for ax in range(grid.dim):
        shape = [1] * grid.dim
        shape[ax] = grid.n_per_dim
        m = keep1.reshape(shape)
        mask = m if mask is None else (mask & m)
    return np.broadcast_to(mask, grid.shape).copy()


# ----------------------------------------------------------------------
# derivatives and norms
# ----------------------------------------------------------------------

def grad_hat(grid: Grid, f_hat: np.ndarray) -> np.ndarray:
    """Spectral gradient of a scalar, shape (d, ...)."""
    return np.stack([1j * grid.ks[c] * f_hat for c in range(grid.dim)])

def div_hat(grid: Grid, u_hat: np.ndarray) -> np.ndarray:
    """Spectral divergence of a vector field."""
    return sum(1j * grid.ks[c] * u_hat[c] for c in range(grid.dim))

def lp_norm(grid: Grid, values: np.ndarray, p: float) -> float:
    """Lattice quadrature L^p norm of a physical field.

    Vector/tensor input is reduced with the pointwise Euclidean magnitude.
    """
    rank = _check_rank(grid, values)
    mag = np.abs(values) if rank == 0 else np.sqrt(
        (values.real ** 2 + values.imag ** 2 if np.iscomplexobj(values)
         else values ** 2).reshape((-1,) + grid.shape).sum(axis=0))
    if np.isinf(p):
        return float(np.max(mag))
    return float((grid.cell_volume * np.sum(mag ** p)) ** (1.0 / p))

def l2_norm_spectral(grid: Grid, coef: np.ndarray) -> float:
    """L^2 norm from spectral coefficients (Parseval)."""
    _check_rank(grid, coef)
    return float(grid.box_length ** (grid.dim / 2.0)
                 * np.sqrt(np.sum(np.abs(coef) ** 2)))


# ----------------------------------------------------------------------
# snapshot files
# ----------------------------------------------------------------------
# layout: magic "CNSP1" | dim int32 | n_per_dim int32 | box_length float64 |
#         rank int32 | payload (row-major float64, or interleaved complex128
#         for spectral data), all little-endian.

_HEADER = struct.Struct("<5sii d i")


def write_snapshot(path, grid: Grid, values: np.ndarray) -> None:
    rank = _check_rank(grid, values)
    arr = np.ascontiguousarray(values)
    if np.iscomplexobj(arr):
        arr = arr.astype("<c16")
    else:
        arr = arr.astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, grid.dim, grid.n_per_dim,
                              grid.box_length, rank))
        fh.write(arr.tobytes())


def read_snapshot(path):
    """Returns (grid, values); complex payload is detected from the size."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, dim, n, box_length, rank = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a CNSP1 snapshot")
        payload = fh.read()
    grid = make_grid(dim, n, box_length)
    count = dim ** rank * n ** dim
    if len(payload) == 16 * count:
        arr = np.frombuffer(payload, dtype="<c16")
    elif len(payload) == 8 * count:
        arr = np.frombuffer(payload, dtype="<f8")
    else:
        raise ValueError(f"{path}: payload size does not match header")
    shape = (dim,) * rank + grid.shape
    return grid, arr.reshape(shape).copy()

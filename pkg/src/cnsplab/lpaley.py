"""Homogeneous Littlewood-Paley decomposition and Besov norms on the lattice.

The radial cutoff chi is a mollified step built from the standard bump
exp(-1/(u(1-u))): identically 1 on |xi| <= 3/4, supported in |xi| < 4/3,
tabulated at 4096 samples with cubic interpolation in between.  The annulus
profile is phi(xi) = chi(xi/2) - chi(xi), supported in 3/4 <= |xi| <= 8/3 and
identically 1 on 4/3 <= |xi| <= 3/2.  Because every block evaluates the same
interpolated chi, the telescoping partition of unity holds to round-off on
the whole lattice.

Blocks outside the resolvable range are truncated: j_min is the lowest block
whose annulus contains a lattice point, and everything above j_max is folded
into the top block so that the multipliers still sum to one.  Reports should
state this truncation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import grid as gridmod
from .grid import Grid

_PLATEAU = 0.75
_SUPPORT = 4.0 / 3.0
_TABLE_SIZE = 4096


def _transition_spline() -> CubicSpline:
    """Smooth step 1 -> 0 on [0, 1], from the bump exp(-1/(u(1-u)))."""
    u = np.linspace(0.0, 1.0, _TABLE_SIZE + 1)
    b = np.zeros_like(u)
    inner = (u > 0) & (u < 1)
    b[inner] = np.exp(-1.0 / (u[inner] * (1.0 - u[inner])))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (b[1:] + b[:-1]) * np.diff(u))])
    cum /= cum[-1]
    return CubicSpline(u, 1.0 - cum, bc_type="clamped")


_SPLINE = _transition_spline()


def chi(r):
    """Radial low-pass profile: 1 on [0, 3/4], 0 beyond 4/3, smooth between."""
    r = np.asarray(r, dtype=float)
    s = (r - _PLATEAU) / (_SUPPORT - _PLATEAU)
    mid = np.clip(_SPLINE(np.clip(s, 0.0, 1.0)), 0.0, 1.0)
    out = np.where(s <= 0.0, 1.0, np.where(s >= 1.0, 0.0, mid))
    return out if out.ndim else float(out)


def lp_phi(r):
    """Annulus profile phi(r) = chi(r/2) - chi(r)."""
    return chi(np.asarray(r, dtype=float) / 2.0) - chi(r)


@dataclass(frozen=True)
class BesovSpec:
    """Index triple (s, p, r) of a homogeneous Besov norm."""

    s: float
    p: float = 2.0
    r: float = 1.0

    def __post_init__(self):
        if not (1.0 <= self.p):
            raise ValueError(f"p must be in [1, inf], got {self.p}")
        if not (1.0 <= self.r):
            raise ValueError(f"r must be in [1, inf], got {self.r}")


@dataclass(frozen=True)
class DyadicPartition:
    """Tabulated dyadic block multipliers for one grid.

    Block j multiplies spectral coefficients by phi(xi/2^j); the topmost
    block absorbs the remainder 1 - chi(xi/2^j_max) so the multipliers sum to
    exactly 1 on every nonzero lattice mode.  j0 splits low/high frequencies:
    the low part is chi(xi/2^j0) f (blocks j <= j0-1 plus tails).
    """

    grid: Grid
    j_min: int
    j_max: int
    j0: int
    multipliers: dict = field(repr=False, compare=False)
    low_multiplier: np.ndarray = field(repr=False, compare=False)

    @property
    def js(self):
        return list(range(self.j_min, self.j_max + 1))

    def block_multiplier(self, j: int) -> np.ndarray:
        if j < self.j_min or j > self.j_max:
            raise ValueError(f"block {j} outside [{self.j_min}, {self.j_max}]")
        return self.multipliers[j]


def resolvable_block_range(grid: Grid):
    """(j_min, j_max): blocks whose annulus meets the lattice spectrum.

    The lower end is checked against the actual lattice radii; a block whose
    support only grazes the first shell (where phi vanishes) is dropped.
    """
    j_min = int(np.ceil(np.log2(3.0 * grid.xi_min / 8.0)))
    j_max = int(np.ceil(np.log2(3.0 * grid.xi_max / 8.0)))
    radii = grid.xi[grid.xi2 > 0]
    near = radii[radii <= 8.0 / 3.0 * 2.0 ** (j_min + 2)]
    while j_min < j_max and float(np.max(lp_phi(near / 2.0 ** j_min))) < 1e-8:
        j_min += 1
    return j_min, j_max


def build_partition(grid: Grid, j0: int) -> DyadicPartition:
    j_min, j_max = resolvable_block_range(grid)
    if not (j_min <= j0 <= j_max):
        raise ValueError(f"j0={j0} outside resolvable range [{j_min}, {j_max}]")
    xi = grid.xi
    mult = {}
    for j in range(j_min, j_max):
        mult[j] = lp_phi(xi / 2.0 ** j)
    # top block folded so the lattice partition of unity is exact
    mult[j_max] = np.clip(1.0 - chi(xi / 2.0 ** j_max), 0.0, None)
    low = chi(xi / 2.0 ** j0)
    return DyadicPartition(grid, j_min, j_max, j0, mult, low)


def dyadic_block(partition: DyadicPartition, j: int, coef: np.ndarray) -> np.ndarray:
    """Spectral coefficients of the dyadic block: phi(xi/2^j) * coef."""
    return partition.block_multiplier(j) * coef


def split(partition: DyadicPartition, coef: np.ndarray) -> tuple:
    """Low/high decomposition at threshold j0; low + high == coef exactly."""
    low = partition.low_multiplier * coef
    return low, coef - low


# ----------------------------------------------------------------------
# norms
# ----------------------------------------------------------------------

def block_lp_norms(partition: DyadicPartition, coef: np.ndarray, p: float,
                   weight: np.ndarray | None = None) -> np.ndarray:
    """L^p lattice norms of every dyadic block, in block order.

    ``weight`` is an optional extra radial multiplier (e.g. |xi|^s) applied in
    spectral space before measuring.  p = 2 is evaluated by Parseval without
    transforms; other p by quadrature of the physical block.
    """
    g = partition.grid
    w = coef if weight is None else weight * coef
    out = np.empty(len(partition.js))
    if p == 2.0:
        mag2 = (np.abs(w) ** 2).reshape((-1,) + g.shape).sum(axis=0)
        vol = g.box_length ** (g.dim / 2.0)
        for i, j in enumerate(partition.js):
            out[i] = vol * np.sqrt(np.sum(partition.multipliers[j] ** 2 * mag2))
        return out
    for i, j in enumerate(partition.js):
        blk = gridmod.inverse(g, partition.multipliers[j] * w)
        out[i] = gridmod.lp_norm(g, blk, p)
    return out


def _lr_aggregate(values: np.ndarray, r: float) -> float:
    if np.isinf(r):
        return float(np.max(values)) if values.size else 0.0
    return float(np.sum(values ** r) ** (1.0 / r)) if values.size else 0.0


def besov_norm(coef: np.ndarray, spec: BesovSpec, partition: DyadicPartition,
               part: str = "all") -> float:
    """Homogeneous Besov norm: l^r over j of 2^{js} ||Delta_j f||_{L^p}.

    ``part`` restricts the block sum: 'low' keeps j <= j0-1, 'high' j >= j0.
    """
    norms = block_lp_norms(partition, coef, spec.p)
    js = np.array(partition.js)
    if part == "low":
        keep = js <= partition.j0 - 1
    elif part == "high":
        keep = js >= partition.j0
    elif part == "all":
        keep = np.ones(len(js), dtype=bool)
    else:
        raise ValueError(f"unknown part {part!r}")
    vals = 2.0 ** (js[keep] * spec.s) * norms[keep]
    return _lr_aggregate(vals, spec.r)


@dataclass
class NormSeries:
    """Per-block L^p norms sampled along a trajectory."""

    js: list
    p: float
    times: np.ndarray
    block_norms: np.ndarray   # shape (nt, nj)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.block_norms = np.asarray(self.block_norms, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.block_norms.shape != (len(self.times), len(self.js)):
            raise ValueError("block_norms shape mismatch")


def chemin_lerner_norm(series: NormSeries, rho: float, spec: BesovSpec) -> float:
    """Mixed time-space norm: l^r over j of 2^{js} || ||Delta_j f||_{L^p} ||_{L^rho_t}.

    Time integrals use the trapezoidal rule; rho = inf takes the running max.
    """
    if series.times.size == 0:
        raise ValueError("empty series")
    if not (1.0 <= rho):
        raise ValueError(f"rho must be in [1, inf], got {rho}")
    if np.isinf(rho):
        per_block = series.block_norms.max(axis=0)
    else:
        per_block = np.trapezoid(series.block_norms ** rho, series.times,
                                 axis=0) ** (1.0 / rho)
    js = np.array(series.js)
    return _lr_aggregate(2.0 ** (js * spec.s) * per_block, spec.r)


# ----------------------------------------------------------------------
# CSV export
# ----------------------------------------------------------------------

def write_block_norms_csv(path, series: NormSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "j", "p", "block_norm"])
        for i, t in enumerate(series.times):
            for jix, j in enumerate(series.js):
                w.writerow([repr(float(t)), j, series.p,
                            repr(float(series.block_norms[i, jix]))])


def write_besov_summary_csv(path, rows) -> None:
    """rows: iterable of dicts with keys t, s, p, r, value."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "s", "p", "r", "value"])
        for row in rows:
            w.writerow([repr(float(row["t"])), row["s"], row["p"], row["r"],
                        repr(float(row["value"]))])

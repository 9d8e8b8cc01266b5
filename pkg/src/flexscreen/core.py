"""Domain types: output/type grids, distributions, wages, mechanisms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: mass above this counts as support ("mu-almost all" checks)
SUPPORT_THRESHOLD = 1e-10
#: unit-mass tolerance for every Dist
MASS_TOL = 1e-12


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_increasing(points: np.ndarray, name: str) -> None:
    if points.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(np.diff(points) <= 0):
        raise ValueError(f"{name} must be strictly increasing")


@dataclass(frozen=True, eq=False)
class OutputGrid:
    """Finite ordered set of output levels ``x_1 < ... < x_n``."""

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        _check_increasing(pts, "output grid")
        if pts.size < 2:
            raise ValueError("output grid needs at least 2 points")
        object.__setattr__(self, "points", pts)

    @classmethod
    def linspace(cls, low: float, high: float, n: int) -> "OutputGrid":
        return cls(np.linspace(low, high, n))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        return isinstance(other, OutputGrid) and np.array_equal(self.points, other.points)

    __hash__ = None

    @property
    def low(self) -> float:
        return float(self.points[0])

    @property
    def high(self) -> float:
        return float(self.points[-1])


@dataclass(frozen=True, eq=False)
class TypeGrid:
    """Finite ordered set of productivity types inside ``(0, 1)``."""

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen(np.atleast_1d(self.points))
        _check_increasing(pts, "type grid")
        if pts.size < 1:
            raise ValueError("type grid is empty")
        if pts[0] <= 0.0 or pts[-1] >= 1.0:
            raise ValueError("types must lie strictly inside (0, 1)")
        object.__setattr__(self, "points", pts)

    @classmethod
    def linspace(cls, low: float, high: float, n: int) -> "TypeGrid":
        return cls(np.linspace(low, high, n))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        return isinstance(other, TypeGrid) and np.array_equal(self.points, other.points)

    __hash__ = None

    @property
    def spacing(self) -> float:
        """Largest gap between consecutive types (0 for a single type)."""
        if self.points.size < 2:
            return 0.0
        return float(np.max(np.diff(self.points)))


@dataclass(frozen=True, eq=False)
class Dist:
    """Probability vector over the points of an :class:`OutputGrid`."""

    grid: OutputGrid
    mass: np.ndarray

    def __post_init__(self):
        mass = np.array(self.mass, dtype=float)
        if mass.shape != (len(self.grid),):
            raise ValueError(
                f"mass has shape {mass.shape}, grid has {len(self.grid)} points"
            )
        if not np.all(np.isfinite(mass)):
            raise ValueError("mass contains non-finite values")
        if np.any(mass < -MASS_TOL):
            raise ValueError("mass must be nonnegative")
        total = mass.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mass sums to {total!r}, expected 1")
        # clip residue and renormalise so the 1e-12 invariant holds exactly
        mass = np.clip(mass, 0.0, None)
        mass = mass / mass.sum()
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Dist)
            and self.grid == other.grid
            and np.array_equal(self.mass, other.mass)
        )

    __hash__ = None

    def support(self, threshold: float = SUPPORT_THRESHOLD) -> np.ndarray:
        """Indices carrying mass above ``threshold``."""
        return np.flatnonzero(self.mass > threshold)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.mass)

    def mean(self) -> float:
        return expectation(self, self.grid.points)


@dataclass(frozen=True, eq=False)
class WageSchedule:
    """Payment at each output grid point."""

    grid: OutputGrid
    pay: np.ndarray

    def __post_init__(self):
        pay = _frozen(self.pay)
        if pay.shape != (len(self.grid),):
            raise ValueError(
                f"wage has shape {pay.shape}, grid has {len(self.grid)} points"
            )
        if not np.all(np.isfinite(pay)):
            raise ValueError("wage must be finite at every grid point")
        object.__setattr__(self, "pay", pay)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, WageSchedule)
            and self.grid == other.grid
            and np.array_equal(self.pay, other.pay)
        )

    __hash__ = None


def make_dirac(grid: OutputGrid, index: int) -> Dist:
    """Point mass at ``grid.points[index]``."""
    n = len(grid)
    if not -n <= index < n:
        raise IndexError(f"index {index} out of range for grid of {n} points")
    mass = np.zeros(n)
    mass[index] = 1.0
    return Dist(grid, mass)


def make_binary(grid: OutputGrid, p: float) -> Dist:
    """Mass ``p`` on the top output and ``1 - p`` on the bottom output."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    mass = np.zeros(len(grid))
    mass[0] = 1.0 - p
    mass[-1] += p
    return Dist(grid, mass)


def fosd_leq(a: Dist, b: Dist) -> bool:
    """True iff ``b`` first-order stochastically dominates ``a``."""
    if a.grid != b.grid:
        raise ValueError("distributions live on different grids")
    return bool(np.all(b.cdf() <= a.cdf() + MASS_TOL))


def expectation(d: Dist, values) -> float:
    values = np.asarray(values, dtype=float)
    if values.shape != d.mass.shape:
        raise ValueError(
            f"values have shape {values.shape}, distribution has {d.mass.shape}"
        )
    return float(d.mass @ values)


@dataclass(frozen=True, eq=False)
class Mechanism:
    """Direct mechanism: per type a wage, a recommended Dist and a promised utility.

    Stored as dense arrays: ``wages`` and ``recommendations`` have shape
    ``(n_types, n_outputs)``, ``promised_utility`` has shape ``(n_types,)``.
    """

    types: TypeGrid
    outputs: OutputGrid
    wages: np.ndarray
    recommendations: np.ndarray
    promised_utility: np.ndarray

    def __post_init__(self):
        m, n = len(self.types), len(self.outputs)
        wages = _frozen(self.wages)
        recs = np.array(self.recommendations, dtype=float)
        util = _frozen(np.atleast_1d(self.promised_utility))
        if wages.shape != (m, n):
            raise ValueError(f"wages shape {wages.shape} != {(m, n)}")
        if recs.shape != (m, n):
            raise ValueError(f"recommendations shape {recs.shape} != {(m, n)}")
        if util.shape != (m,):
            raise ValueError(f"promised utility shape {util.shape} != {(m,)}")
        if not np.all(np.isfinite(wages)):
            raise ValueError("wages must be finite")
        if not np.all(np.isfinite(util)):
            raise ValueError("promised utility must be finite")
        # route every row through Dist for the simplex invariants
        recs = np.vstack([Dist(self.outputs, row).mass for row in recs])
        recs.setflags(write=False)
        object.__setattr__(self, "wages", wages)
        object.__setattr__(self, "recommendations", recs)
        object.__setattr__(self, "promised_utility", util)

    def __len__(self) -> int:
        return len(self.types)

    def wage(self, i: int) -> WageSchedule:
        return WageSchedule(self.outputs, self.wages[i])

    def recommendation(self, i: int) -> Dist:
        return Dist(self.outputs, self.recommendations[i])

    def replace(self, **changes) -> "Mechanism":
        kwargs = dict(
            types=self.types,
            outputs=self.outputs,
            wages=self.wages,
            recommendations=self.recommendations,
            promised_utility=self.promised_utility,
        )
        kwargs.update(changes)
        return Mechanism(**kwargs)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Mechanism)
            and self.types == other.types
            and self.outputs == other.outputs
            and np.array_equal(self.wages, other.wages)
            and np.array_equal(self.recommendations, other.recommendations)
            and np.array_equal(self.promised_utility, other.promised_utility)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GenSchedule:
    """Recommendation for every (true type, report) pair.

    ``recs[i, j]`` is the distribution recommended to true type ``i`` after
    reporting type ``j``; the diagonal must match the mechanism.
    """

    mechanism: Mechanism
    recs: np.ndarray = field(repr=False)

    def __post_init__(self):
        m, n = len(self.mechanism.types), len(self.mechanism.outputs)
        recs = np.array(self.recs, dtype=float)
        if recs.shape != (m, m, n):
            raise ValueError(f"schedule shape {recs.shape} != {(m, m, n)}")
        if np.any(np.isnan(recs)):
            raise ValueError(
                "schedule has unpopulated cells; fill them with populate_schedule"
            )
        for i in range(m):
            for j in range(m):
                recs[i, j] = Dist(self.mechanism.outputs, recs[i, j]).mass
        diag = recs[np.arange(m), np.arange(m)]
        if not np.allclose(diag, self.mechanism.recommendations, rtol=0, atol=MASS_TOL):
            raise ValueError("schedule diagonal disagrees with mechanism recommendations")
        recs.setflags(write=False)
        object.__setattr__(self, "recs", recs)

    def rec(self, i: int, j: int) -> Dist:
        return Dist(self.mechanism.outputs, self.recs[i, j])

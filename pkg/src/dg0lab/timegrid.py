"""Temporal partitions 0 = t_0 < ... < t_M = T and step-size conditions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArgument

# Relative slack applied to every condition comparison.
SLACK = 1e-12
# Steps agreeing to this relative accuracy are treated as exactly uniform.
UNIFORM_SNAP = 1e-13


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Partition of (0, T] into intervals I_m = (t_{m-1}, t_m].

    Intervals are indexed 1..M as in the usual dG notation; ``steps[m-1]``
    is the length of I_m.
    """

    T: float
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        if self.T <= 0:
            raise InvalidArgument(f"final time must be positive, got {self.T}")
        if nodes.ndim != 1 or nodes.size < 2:
            raise InvalidArgument("a time grid needs at least two nodes")
        if nodes[0] != 0.0 or nodes[-1] != self.T:
            raise InvalidArgument("nodes must start at 0 and end at T")
        if np.any(np.diff(nodes) <= 0):
            raise InvalidArgument("nodes must be strictly increasing")

    @property
    def M(self) -> int:
        return self.nodes.size - 1

    @cached_property
    def steps(self) -> np.ndarray:
        s = np.diff(self.nodes)
        # node rounding makes uniform steps differ in the last bits; snap them
        if s.max() - s.min() <= UNIFORM_SNAP * s.max():
            s = np.full_like(s, self.T / s.size)
        s.setflags(write=False)
        return s

    @property
    def k(self) -> float:
        return float(self.steps.max())

    @property
    def k_min(self) -> float:
        return float(self.steps.min())

    def step(self, m: int) -> float:
        self._check_index(m)
        return float(self.steps[m - 1])

    def interval(self, m: int) -> tuple[float, float]:
        self._check_index(m)
        return float(self.nodes[m - 1]), float(self.nodes[m])

    def interval_of(self, t: float) -> int:
        """Index m with t in (t_{m-1}, t_m]; t = 0 maps to 0."""
        if t < 0 or t > self.T * (1 + SLACK):
            raise InvalidArgument(f"time {t} outside [0, T]")
        if t == 0:
            return 0
        return int(min(np.searchsorted(self.nodes, t, side="left"), self.M))

    def gauss_points(self, m: int, q: int) -> tuple[np.ndarray, np.ndarray]:
        """q-point Gauss-Legendre nodes on I_m with weights summing to 1."""
        a, b = self.interval(m)
        x, w = np.polynomial.legendre.leggauss(q)
        return a + 0.5 * (b - a) * (x + 1.0), 0.5 * w

    def log_factor(self) -> float:
        """ln(T/k) with k the largest step."""
        return float(np.log(self.T / self.k))

    def _check_index(self, m):
        if not 1 <= m <= self.M:
            raise InvalidArgument(f"interval index {m} outside 1..{self.M}")

    def to_json(self) -> str:
        return json.dumps({"T": self.T, "nodes": [float(t) for t in self.nodes]})

    @classmethod
    def from_json(cls, text: str) -> TimeGrid:
        data = json.loads(text)
        return cls(float(data["T"]), np.asarray(data["nodes"], dtype=float))


def make_uniform(T: float, M: int) -> TimeGrid:
    if T <= 0 or M < 1:
        raise InvalidArgument(f"need T > 0 and M >= 1, got T={T}, M={M}")
    nodes = T * np.arange(M + 1) / M
    nodes[-1] = T
    return TimeGrid(float(T), nodes)


def make_graded(T: float, M: int, gamma: float) -> TimeGrid:
    """Nodes t_m = T (m/M)^gamma, refined toward t = 0 for gamma > 1."""
    if gamma < 1:
        raise InvalidArgument(f"grading exponent must be >= 1, got {gamma}")
    if T <= 0 or M < 1:
        raise InvalidArgument(f"need T > 0 and M >= 1, got T={T}, M={M}")
    nodes = T * (np.arange(M + 1) / M) ** gamma
    nodes[-1] = T
    return TimeGrid(float(T), nodes)


@dataclass(frozen=True)
class ConditionReport:
    min_step_ok: bool  # (i)   k_min >= c k^beta
    ratio_ok: bool  # (ii)  1/kappa <= k_m/k_{m+1} <= kappa
    max_step_ok: bool  # (iii) k <= T/4
    min_ratio: float
    max_ratio: float
    k: float
    k_min: float
    k_minus_kmin: float

    @property
    def all_ok(self) -> bool:
        return self.min_step_ok and self.ratio_ok and self.max_step_ok

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["all_ok"] = self.all_ok
        return d


def validate_conditions(grid: TimeGrid, c: float, beta: float, kappa: float) -> ConditionReport:
    """Check the three mesh conditions; never raises on a valid grid."""
    steps = grid.steps
    k, k_min = grid.k, grid.k_min
    if steps.size > 1:
        ratios = steps[:-1] / steps[1:]
        rmin, rmax = float(ratios.min()), float(ratios.max())
    else:
        rmin = rmax = 1.0
    return ConditionReport(
        min_step_ok=bool(k_min >= c * k**beta * (1 - SLACK)),
        ratio_ok=bool(rmin >= (1 / kappa) * (1 - SLACK) and rmax <= kappa * (1 + SLACK)),
        max_step_ok=bool(k <= 0.25 * grid.T * (1 + SLACK)),
        min_ratio=rmin,
        max_ratio=rmax,
        k=k,
        k_min=k_min,
        k_minus_kmin=k - k_min,
    )

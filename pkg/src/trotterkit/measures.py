"""Finitely supported measures over a metric state space.

Positive measures are atom lists with nonnegative weights; signed measures
are stored as an explicit (positive, negative) pair so that the Jordan
decomposition and the total variation norm are structural rather than
computed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# Relative prune threshold for atom weights, and the coordinate tolerance
# under which two Euclidean points are treated as the same atom location.
PRUNE_REL_TOL = 1e-12
COINCIDENCE_TOL = 1e-12


class SpaceMismatchError(ValueError):
    """Raised when measures or operators live on incompatible state spaces."""


class InvalidMetricError(ValueError):
    """Raised when a distance matrix fails the metric axioms."""


@dataclass(frozen=True)
class StateSpace:
    """A finite metric space (distance matrix) or a Euclidean point domain.

    For ``kind == "finite"`` points are integer indices ``0..size-1`` and
    ``dist`` is the full distance matrix.  For ``kind == "euclidean"`` points
    are coordinate arrays of length ``dim`` and the metric is Euclidean.
    """

    kind: str
    size: int = 0
    dim: int = 0
    dist: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "finite":
            d = np.asarray(self.dist, dtype=float)
            if d.shape != (self.size, self.size):
                raise InvalidMetricError(
                    f"distance matrix shape {d.shape} does not match size {self.size}"
                )
            if not np.allclose(d, d.T, rtol=0.0, atol=0.0):
                raise InvalidMetricError("distance matrix is not symmetric")
            if np.any(np.diag(d) != 0.0):
                raise InvalidMetricError("distance matrix has nonzero diagonal")
            off = d[~np.eye(self.size, dtype=bool)]
            if off.size and np.any(off <= 0.0):
                raise InvalidMetricError("off-diagonal distances must be positive")
            # triangle inequality, exhaustive: d_ik <= d_ij + d_jk
            if self.size >= 3:
                via = d[:, :, None] + d[None, :, :]  # via[i,j,k] = d_ij + d_jk
                if np.any(d[:, None, :] > via + 1e-12):
                    raise InvalidMetricError("triangle inequality violated")
            object.__setattr__(self, "dist", d)
        elif self.kind == "euclidean":
            if self.dim < 1:
                raise InvalidMetricError("euclidean space needs dim >= 1")
        else:
            raise InvalidMetricError(f"unknown space kind {self.kind!r}")

    @staticmethod
    def finite(dist) -> "StateSpace":
        d = np.asarray(dist, dtype=float)
        return StateSpace(kind="finite", size=d.shape[0], dist=d)

    @staticmethod
    def euclidean(dim: int) -> "StateSpace":
        return StateSpace(kind="euclidean", dim=dim)

    def distance(self, p, q) -> float:
        if self.kind == "finite":
            return float(self.dist[int(p), int(q)])
        return float(np.linalg.norm(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)))

    def points_equal(self, p, q) -> bool:
        if self.kind == "finite":
            return int(p) == int(q)
        return bool(
            np.all(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)) < COINCIDENCE_TOL)
        )

    def point_key(self, p):
        """Hashable canonical form of a point, for atom merging."""
        if self.kind == "finite":
            return int(p)
        return tuple(np.asarray(p, dtype=float).tolist())

    def __eq__(self, other):
        if not isinstance(other, StateSpace):
            return NotImplemented
        if self.kind != other.kind:
            return False
        if self.kind == "finite":
            return self.size == other.size and np.array_equal(self.dist, other.dist)
        return self.dim == other.dim

    def __hash__(self):
        if self.kind == "finite":
            return hash(("finite", self.size, self.dist.tobytes()))
        return hash(("euclidean", self.dim))


def _merge_atoms(space: StateSpace, points, weights):
    """Merge coincident atoms and drop those below the prune tolerance.

    On Euclidean spaces, points within the coincidence tolerance count as the
    same atom even when their exact keys differ.
    """
    merged: dict = {}
    order: list = []
    for p, w in zip(points, weights):
        key = space.point_key(p)
        if key not in merged and space.kind == "euclidean":
            for existing, q in order:
                if space.points_equal(p, q):
                    key = existing
                    break
        if key in merged:
            merged[key] += float(w)
        else:
            merged[key] = float(w)
            order.append((key, p))
    total = sum(abs(w) for w in merged.values())
    cut = PRUNE_REL_TOL * total
    out_p, out_w = [], []
    for key, p in order:
        w = merged[key]
        if abs(w) > cut and w != 0.0:
            out_p.append(p)
            out_w.append(w)
    return out_p, out_w


@dataclass(frozen=True)
class PositiveMeasure:
    """A finitely supported positive measure: parallel atom/weight lists."""

    space: StateSpace
    points: tuple = ()
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @staticmethod
    def from_atoms(space: StateSpace, atoms) -> "PositiveMeasure":
        points = [p for p, _ in atoms]
        weights = [float(w) for _, w in atoms]
        if any(w < 0.0 for w in weights):
            raise ValueError("positive measure cannot carry negative weights")
        p, w = _merge_atoms(space, points, weights)
        return PositiveMeasure(space=space, points=tuple(space.point_key(x) for x in p),
                               weights=np.asarray(w, dtype=float))

    @staticmethod
    def dirac(space: StateSpace, point, weight: float = 1.0) -> "PositiveMeasure":
        return PositiveMeasure.from_atoms(space, [(point, weight)])

    @property
    def tv(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return len(self.points)

    def as_signed(self) -> "SignedMeasure":
        return SignedMeasure(pos=self, neg=PositiveMeasure(space=self.space))

    def weight_vector(self) -> np.ndarray:
        """Dense weight vector over all states (finite spaces only)."""
        if self.space.kind != "finite":
            raise ValueError("dense weight vector only exists for finite spaces")
        v = np.zeros(self.space.size)
        for p, w in zip(self.points, self.weights):
            v[int(p)] += w
        return v

    @staticmethod
    def from_weight_vector(space: StateSpace, v) -> "PositiveMeasure":
        v = np.asarray(v, dtype=float)
        return PositiveMeasure.from_atoms(space, [(i, v[i]) for i in range(space.size) if v[i] != 0.0])

    def to_json_dict(self) -> dict:
        return {"atoms": [{"point": _point_json(self.space, p), "weight": w}
                          for p, w in zip(self.points, self.weights.tolist())]}


@dataclass(frozen=True)
class SignedMeasure:
    """Jordan-style pair of positive measures with disjoint supports."""

    pos: PositiveMeasure
    neg: PositiveMeasure

    @property
    def space(self) -> StateSpace:
        return self.pos.space

    @property
    def tv(self) -> float:
        return self.pos.tv + self.neg.tv

    @staticmethod
    def from_atoms(space: StateSpace, atoms) -> "SignedMeasure":
        points = [p for p, _ in atoms]
        weights = [float(w) for _, w in atoms]
        return _build_signed(space, points, weights)

    def support(self):
        """Union support: list of points and the signed weight vector."""
        pts = list(self.pos.points) + list(self.neg.points)
        wts = np.concatenate([self.pos.weights, -self.neg.weights]) if pts else np.zeros(0)
        return pts, wts

    def to_json_dict(self) -> dict:
        pts, wts = self.support()
        return {"atoms": [{"point": _point_json(self.space, p), "weight": w}
                          for p, w in zip(pts, wts.tolist())]}


def _point_json(space: StateSpace, p):
    if space.kind == "finite":
        return int(p)
    return list(p)


def _build_signed(space, points, weights) -> SignedMeasure:
    p, w = _merge_atoms(space, points, weights)
    pos_atoms = [(x, v) for x, v in zip(p, w) if v > 0.0]
    neg_atoms = [(x, -v) for x, v in zip(p, w) if v < 0.0]
    return SignedMeasure(
        pos=PositiveMeasure.from_atoms(space, pos_atoms),
        neg=PositiveMeasure.from_atoms(space, neg_atoms),
    )


def tv_norm(mu: SignedMeasure) -> float:
    """Total variation norm: total mass of the positive plus negative part."""
    return mu.tv


def normalize_atoms(mu: SignedMeasure) -> SignedMeasure:
    """Re-merge coincident atoms, cancel opposite signs, prune tiny weights."""
    pts, wts = mu.support()
    return _build_signed(mu.space, pts, wts)


def linear_combine(coeffs, measures) -> SignedMeasure:
    """Atomwise weighted sum of signed (or positive) measures."""
    if len(coeffs) != len(measures):
        raise ValueError("coefficient and measure lists differ in length")
    if not measures:
        raise ValueError("need at least one measure")
    space = measures[0].space if isinstance(measures[0], SignedMeasure) else measures[0].space
    points: list = []
    weights: list = []
    for c, m in zip(coeffs, measures):
        if isinstance(m, PositiveMeasure):
            m = m.as_signed()
        if m.space != space:
            raise SpaceMismatchError("measures live on different state spaces")
        pts, wts = m.support()
        points.extend(pts)
        weights.extend((float(c) * wts).tolist())
    return _build_signed(space, points, weights)


def measure_to_json(mu, *, indent=None) -> str:
    """Serialize with >= 15 significant digits on weights (repr round-trips)."""
    d = mu.to_json_dict()
    return json.dumps(d, indent=indent)


def measure_from_json(space: StateSpace, text: str) -> SignedMeasure:
    d = json.loads(text)
    atoms = [(a["point"], float(a["weight"])) for a in d["atoms"]]
    for p, w in atoms:
        if not math.isfinite(w):
            raise ValueError("non-finite atom weight")
    return SignedMeasure.from_atoms(space, atoms)

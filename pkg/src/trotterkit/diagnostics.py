"""Finite-sample evidence tables for the structural hypotheses behind the scheme.

Probes sample operators and perturbed measures and record distances; except
where an exact closed form is testable (identity family, two-atom Dirac
distance) the outputs are evidence tables, not pass/fail certificates of the
underlying universally quantified assumptions.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .bl_metric import bl_distance
from .measures import PositiveMeasure, StateSpace, linear_combine
from .operators import MarkovOperatorSpec, SemigroupSpec, apply, at_time
from .splitting import trotter_iterate


def _apply(P, mu):
    """Apply either a MarkovOperatorSpec or a callable composite operator."""
    if isinstance(P, MarkovOperatorSpec):
        return apply(P, mu)
    return P(mu)


@dataclass(frozen=True)
class EquicontinuityProbe:
    """Center measure, perturbations with input distances, operator family."""

    center: PositiveMeasure
    perturbations: tuple
    input_distances: tuple
    family: tuple

    def __post_init__(self):
        if not self.perturbations or not self.family:
            raise ValueError("probe needs at least one perturbation and one operator")
        if any(d <= 0.0 for d in self.input_distances):
            raise ValueError("input distances must be positive")


@dataclass(frozen=True)
class TightnessProbe:
    radius_grid: tuple
    labels: tuple
    mass_outside: np.ndarray  # rows: (operator, measure) results; cols: radii


def equicontinuity_modulus(probe: EquicontinuityProbe):
    """Worst output distance per input distance, monotone-rebinned.

    Returns a list of (input_distance, worst_output_distance) sorted by input
    distance, with the output column replaced by its running maximum so the
    table is a valid modulus candidate.
    """
    space = probe.center.space
    rows = []
    for nu, din in zip(probe.perturbations, probe.input_distances):
        worst = 0.0
        for P in probe.family:
            worst = max(worst, bl_distance(_apply(P, probe.center), _apply(P, nu), space))
        rows.append((float(din), worst))
    rows.sort(key=lambda r: r[0])
    out, running = [], 0.0
    for din, dout in rows:
        running = max(running, dout)
        out.append((din, running))
    return out


def _centroid(mu: PositiveMeasure) -> np.ndarray:
    pts = np.asarray([np.asarray(p, dtype=float) for p in mu.points])
    return np.average(pts, axis=0, weights=mu.weights)


def tightness_probe(family, mu: PositiveMeasure, radius_grid) -> TightnessProbe:
    """Mass of each P mu outside centroid-centered balls of the given radii.

    Finite state spaces are compact, so the table is identically zero there.
    """
    radius_grid = tuple(float(r) for r in radius_grid)
    labels = tuple(f"operator_{i}" for i in range(len(family)))
    if mu.space.kind == "finite":
        return TightnessProbe(radius_grid, labels,
                              np.zeros((len(family), len(radius_grid))))
    table = np.zeros((len(family), len(radius_grid)))
    for i, P in enumerate(family):
        out = apply(P, mu)
        center = _centroid(out)
        pts = np.asarray([np.asarray(p, dtype=float) for p in out.points])
        dists = np.linalg.norm(pts - center, axis=1)
        for j, r in enumerate(radius_grid):
            table[i, j] = float(np.sum(out.weights[dists > r]))
    return TightnessProbe(radius_grid, labels, table)


def limit_semigroup_check(g1, g2, mu, t, s, n_finest, order="g1_first"):
    """Power and additive semigroup laws of the finest-iterate limit estimate.

    distPower compares the estimate at 2t with the twice-applied estimate at
    t; distAdditive compares the estimate at t+s with the composition of the
    estimates at t and s.  Returns (dist_power, dist_additive,
    self_convergence), the last being the distance between the two finest
    iterates at t, for judging whether n_finest was large enough.
    """
    space = mu.space

    def estimate(time, measure):
        if time == 0.0:
            return measure
        return trotter_iterate(g1, g2, time, n_finest, measure, order)

    self_conv = bl_distance(
        estimate(t, mu) if t > 0 else mu,
        trotter_iterate(g1, g2, t, max(n_finest // 2, 1), mu, order) if t > 0 else mu,
        space)

    est_2t = estimate(2.0 * t, mu)
    est_t_twice = estimate(t, estimate(t, mu))
    dist_power = bl_distance(est_2t, est_t_twice, space)

    est_sum = estimate(t + s, mu)
    est_comp = estimate(t, estimate(s, mu))
    dist_additive = bl_distance(est_sum, est_comp, space)
    return dist_power, dist_additive, self_conv


def feller_continuity_check(g1, g2, t, mu, perturb_sizes, n_finest, rng,
                            order="g1_first"):
    """Output distance of the limit estimate under input perturbations.

    Returns a list of (input_distance, output_distance) rows, one per
    requested perturbation size, sorted by input distance.
    """
    if any(s <= 0.0 for s in perturb_sizes):
        raise ValueError("perturbation sizes must be positive")
    space = mu.space
    base = trotter_iterate(g1, g2, t, n_finest, mu, order) if t > 0 else mu
    rows = []
    for size in perturb_sizes:
        nu = perturb_measure(mu, size, rng)
        din = bl_distance(mu, nu, space)
        out = trotter_iterate(g1, g2, t, n_finest, nu, order) if t > 0 else nu
        rows.append((din, bl_distance(base, out, space)))
    rows.sort(key=lambda r: r[0])
    return rows


def stochastic_continuity_check(g: SemigroupSpec, mu: PositiveMeasure, h_grid):
    """Table of h -> distance between P_h mu and mu over a decreasing grid."""
    h_grid = [float(h) for h in h_grid]
    if any(h <= 0.0 for h in h_grid) or any(
            h_grid[i] <= h_grid[i + 1] for i in range(len(h_grid) - 1)):
        raise ValueError("h grid must be positive and strictly decreasing")
    space = mu.space
    return [(h, bl_distance(apply(at_time(g, h), mu), mu, space)) for h in h_grid]


def perturb_measure(mu: PositiveMeasure, target_distance: float, rng,
                    kind: str = "weights") -> PositiveMeasure:
    """Perturbation at a requested BL distance from ``mu``.

    "weights" rescales atom weights by a random positive factor (any space);
    "locations" shifts atoms by a Gaussian displacement (Euclidean only).
    The jitter amplitude is found by bisection on the resulting distance,
    so the sample sits within 1% of the target.
    """
    if target_distance <= 0.0:
        raise ValueError("target distance must be positive")
    space = mu.space
    if kind == "locations" and space.kind != "euclidean":
        raise ValueError("location jitter needs a Euclidean space")
    if kind == "weights":
        direction = rng.uniform(-1.0, 1.0, size=len(mu.points))
    else:
        direction = rng.normal(size=(len(mu.points), space.dim))

    def candidate(amp):
        if kind == "weights":
            w = mu.weights * np.clip(1.0 + amp * direction, 0.05, None)
            return PositiveMeasure.from_atoms(
                space, list(zip(mu.points, w.tolist())))
        atoms = [(np.asarray(p, dtype=float) + amp * d, w)
                 for p, d, w in zip(mu.points, direction, mu.weights)]
        return PositiveMeasure.from_atoms(space, atoms)

    lo, hi = 0.0, 1.0
    for _ in range(60):
        if bl_distance(mu, candidate(hi), space) >= target_distance:
            break
        hi *= 2.0
    else:
        raise RuntimeError("could not bracket the requested perturbation distance")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        d = bl_distance(mu, candidate(mid), space)
        if abs(d - target_distance) <= 0.01 * target_distance:
            return candidate(mid)
        if d < target_distance:
            lo = mid
        else:
            hi = mid
    return candidate(0.5 * (lo + hi))


def table_to_csv(rows, columns, header: dict) -> str:
    """CSV with a JSON header comment line describing the probe configuration."""
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (int, float, np.floating))
                         else v for v in row])
    return buf.getvalue()

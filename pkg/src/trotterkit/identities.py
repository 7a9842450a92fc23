"""Numerical verification of the scheme's exact operator identities.

Each check evaluates both sides of a telescoping or swap decomposition by
acting on a panel of test measures (never by materializing operator
matrices), and reports the worst BL-norm deviation.  These are exact
operator identities, so deviations are pure floating-point noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bl_metric import bl_dual_norm
from .measures import PositiveMeasure, SignedMeasure, StateSpace, linear_combine
from .operators import SemigroupSpec, apply, apply_signed, at_time

MATRIX_TOL = 1e-10
LIFT_TOL = 1e-8


@dataclass(frozen=True)
class IdentityCheckResult:
    identity_name: str
    max_deviation: float
    instances: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance

    def to_json_dict(self) -> dict:
        return {"identityName": self.identity_name,
                "maxDeviation": self.max_deviation,
                "instances": self.instances,
                "tolerance": self.tolerance,
                "passed": self.passed}


def _tolerance_for(g1: SemigroupSpec) -> float:
    return MATRIX_TOL if g1.kind == "matrix_exponential" else LIFT_TOL


def _as_signed(mu) -> SignedMeasure:
    return mu.as_signed() if isinstance(mu, PositiveMeasure) else mu


def _chain(mu: SignedMeasure, ops) -> SignedMeasure:
    """Apply operators right-to-left, matching written composition order."""
    out = mu
    for P in reversed(ops):
        out = apply_signed(P, out)
    return out


def _commutator(mu, pa, pb) -> SignedMeasure:
    """(Pa Pb - Pb Pa) mu."""
    return linear_combine([1.0, -1.0], [_chain(mu, [pa, pb]), _chain(mu, [pb, pa])])


def _deviation(lhs: SignedMeasure, rhs: SignedMeasure, space) -> float:
    value, _ = bl_dual_norm(linear_combine([1.0, -1.0], [lhs, rhs]), space)
    return value


def check_lemma_a(g1, g2, t, m, j, test_measures) -> IdentityCheckResult:
    """Commutator of one first-factor step against j second-factor steps."""
    if not 1 <= j <= m:
        raise ValueError("need 1 <= j <= m")
    h = t / m
    p1 = at_time(g1, h)
    worst = 0.0
    for mu in test_measures:
        mu = _as_signed(mu)
        lhs = _commutator(mu, p1, at_time(g2, j * h))
        terms = []
        for l in range(j):
            core = _commutator(_chain(mu, [at_time(g2, (j - 1 - l) * h)]),
                               p1, at_time(g2, h))
            terms.append(_chain(core, [at_time(g2, l * h)]))
        rhs = linear_combine([1.0] * len(terms), terms)
        worst = max(worst, _deviation(lhs, rhs, mu.space))
    return IdentityCheckResult("telescoping_single_step", worst, len(test_measures),
                               _tolerance_for(g1))


def check_lemma_b(g1, g2, t, m, k, test_measures) -> IdentityCheckResult:
    """One coarse block against the k-fold product of fine blocks."""
    if not 1 <= k <= m:
        raise ValueError("need 1 <= k <= m")
    h = t / m
    p1, p2 = at_time(g1, h), at_time(g2, h)
    worst = 0.0
    for mu in test_measures:
        mu = _as_signed(mu)
        lhs = linear_combine(
            [1.0, -1.0],
            [_chain(mu, [at_time(g1, k * h), at_time(g2, k * h)]),
             _chain(mu, [p1, p2] * k)])
        terms = []
        for j in range(1, k):
            inner = _chain(mu, [p1, p2] * (k - 1 - j))
            inner = _chain(inner, [p2])
            core = _commutator(inner, p1, at_time(g2, j * h))
            terms.append(_chain(core, [at_time(g1, j * h)]))
        rhs = (linear_combine([1.0] * len(terms), terms) if terms
               else linear_combine([0.0], [mu]))
        worst = max(worst, _deviation(lhs, rhs, mu.space))
    return IdentityCheckResult("telescoping_block", worst, len(test_measures),
                               _tolerance_for(g1))


def check_lemma_c(g1, g2, t, n, k, test_measures) -> IdentityCheckResult:
    """n coarse blocks against nk fine blocks."""
    if n < 1 or k < 1:
        raise ValueError("need n, k >= 1")
    m = n * k
    h = t / m
    p1, p2 = at_time(g1, h), at_time(g2, h)
    p1k, p2k = at_time(g1, k * h), at_time(g2, k * h)
    worst = 0.0
    for mu in test_measures:
        mu = _as_signed(mu)
        lhs = linear_combine(
            [1.0, -1.0],
            [_chain(mu, [p1k, p2k] * n), _chain(mu, [p1, p2] * m)])
        terms = []
        for i in range(n):
            tail = _chain(mu, [p1, p2] * (k * (n - 1 - i)))
            middle = linear_combine(
                [1.0, -1.0],
                [_chain(tail, [p1k, p2k]), _chain(tail, [p1, p2] * k)])
            terms.append(_chain(middle, [p1k, p2k] * i))
        rhs = linear_combine([1.0] * len(terms), terms)
        worst = max(worst, _deviation(lhs, rhs, mu.space))
    return IdentityCheckResult("telescoping_refinement", worst, len(test_measures),
                               _tolerance_for(g1))


def check_corollary(g1, g2, t, n, k, test_measures) -> IdentityCheckResult:
    """Triple-sum decomposition, evaluated exactly as displayed.

    The trailing second-factor time is (j - l) h and the trailing block
    exponent is k(n - i) - j - 1; both are taken verbatim, and the separate
    recomposition through the three telescoping checks localizes any
    discrepancy.
    """
    if n < 1 or k < 1:
        raise ValueError("need n, k >= 1")
    m = n * k
    h = t / m
    p1, p2 = at_time(g1, h), at_time(g2, h)
    p1k, p2k = at_time(g1, k * h), at_time(g2, k * h)
    worst = 0.0
    for mu in test_measures:
        mu = _as_signed(mu)
        lhs = linear_combine(
            [1.0, -1.0],
            [_chain(mu, [p1k, p2k] * n), _chain(mu, [p1, p2] * m)])
        terms = []
        for i in range(n):
            for j in range(1, k):
                for l in range(j):
                    inner = _chain(mu, [p1, p2] * (k * (n - i) - j - 1))
                    inner = _chain(inner, [at_time(g2, (j - l) * h)])
                    core = _commutator(inner, p1, p2)
                    core = _chain(core, [at_time(g2, l * h)])
                    core = _chain(core, [at_time(g1, j * h)])
                    terms.append(_chain(core, [p1k, p2k] * i))
        rhs = (linear_combine([1.0] * len(terms), terms) if terms
               else linear_combine([0.0], [mu]))
        worst = max(worst, _deviation(lhs, rhs, mu.space))
    return IdentityCheckResult("triple_sum_decomposition", worst, len(test_measures),
                               _tolerance_for(g1))


def check_corollary_recomposition(g1, g2, t, n, k, test_measures) -> IdentityCheckResult:
    """Displayed triple sum against the mechanical substitution of the
    telescoping identities into one another.

    The substitution leaves the factors un-merged (trailing second-factor
    times (j-1-l)h and h kept separate, trailing block split as
    (k-1-j) + k(n-1-i)), so a typo in the displayed merged indices would
    surface here while the three telescoping checks still pass.
    """
    if n < 1 or k < 1:
        raise ValueError("need n, k >= 1")
    m = n * k
    h = t / m
    p1, p2 = at_time(g1, h), at_time(g2, h)
    p1k, p2k = at_time(g1, k * h), at_time(g2, k * h)
    worst = 0.0
    for mu in test_measures:
        mu = _as_signed(mu)
        displayed, recomposed = [], []
        for i in range(n):
            for j in range(1, k):
                for l in range(j):
                    inner = _chain(mu, [p1, p2] * (k * (n - i) - j - 1))
                    inner = _chain(inner, [at_time(g2, (j - l) * h)])
                    core = _commutator(inner, p1, p2)
                    core = _chain(core, [at_time(g2, l * h)])
                    core = _chain(core, [at_time(g1, j * h)])
                    displayed.append(_chain(core, [p1k, p2k] * i))

                    inner = _chain(mu, [p1, p2] * (k * (n - 1 - i)))
                    inner = _chain(inner, [p1, p2] * (k - 1 - j))
                    inner = _chain(inner, [p2])
                    inner = _chain(inner, [at_time(g2, (j - 1 - l) * h)])
                    core = _commutator(inner, p1, p2)
                    core = _chain(core, [at_time(g2, l * h)])
                    core = _chain(core, [at_time(g1, j * h)])
                    recomposed.append(_chain(core, [p1k, p2k] * i))
        if displayed:
            lhs = linear_combine([1.0] * len(displayed), displayed)
            rhs = linear_combine([1.0] * len(recomposed), recomposed)
        else:
            lhs = rhs = linear_combine([0.0], [mu])
        worst = max(worst, _deviation(lhs, rhs, mu.space))
    return IdentityCheckResult("triple_sum_recomposition", worst, len(test_measures),
                               _tolerance_for(g1))


def check_swap_identity(g1, g2, t, n, test_measures) -> IdentityCheckResult:
    """Both expansions of (P1 P2)^n - (P2 P1)^n against the direct difference."""
    if n < 1:
        raise ValueError("need n >= 1")
    p1, p2 = at_time(g1, t), at_time(g2, t)
    worst = 0.0
    for mu in test_measures:
        mu = _as_signed(mu)
        direct = linear_combine(
            [1.0, -1.0], [_chain(mu, [p1, p2] * n), _chain(mu, [p2, p1] * n)])
        for leading, trailing in (([p2, p1], [p1, p2]), ([p1, p2], [p2, p1])):
            terms = []
            for i in range(n):
                inner = _chain(mu, trailing * i)
                core = _commutator(inner, p1, p2)
                terms.append(_chain(core, leading * (n - i - 1)))
            rhs = linear_combine([1.0] * len(terms), terms)
            worst = max(worst, _deviation(direct, rhs, mu.space))
    return IdentityCheckResult("order_swap_expansion", worst, len(test_measures),
                               _tolerance_for(g1))


def standard_test_panel(space: StateSpace, rng) -> list:
    """Diracs at every state, the uniform measure, and 3 random ones."""
    panel = [PositiveMeasure.dirac(space, i) for i in range(space.size)]
    panel.append(PositiveMeasure.from_atoms(
        space, [(i, 1.0 / space.size) for i in range(space.size)]))
    for _ in range(3):
        w = rng.uniform(0.05, 1.0, size=space.size)
        panel.append(PositiveMeasure.from_atoms(
            space, [(i, float(w[i] / w.sum())) for i in range(space.size)]))
    return panel


def random_generator(size: int, rng, scale: float = 1.0) -> np.ndarray:
    """Random rate matrix: positive off-diagonals, zero column sums."""
    q = rng.uniform(0.0, scale, size=(size, size))
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=0))
    return q


def run_identity_suite(seed: int, trials: int, max_states: int):
    """Seeded random instances across all identity checks.

    Returns (results, failures) where failures carries replay data for any
    instance exceeding tolerance.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    results, failures = [], []
    for trial in range(trials):
        m_states = int(rng.integers(2, max_states + 1))
        # random metric from points in R^3 keeps the triangle inequality
        pts = rng.normal(size=(m_states, 3))
        dist = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
        space = StateSpace.finite(dist)
        g1 = SemigroupSpec.matrix_exponential(space, random_generator(m_states, rng))
        g2 = SemigroupSpec.matrix_exponential(space, random_generator(m_states, rng))
        panel = standard_test_panel(space, rng)
        t = float(rng.uniform(0.2, 1.5))
        n = int(rng.integers(1, 9))
        k = int(rng.integers(1, 9))
        j = int(rng.integers(1, n * k + 1))
        checks = [
            check_lemma_a(g1, g2, t, n * k, j, panel),
            check_lemma_b(g1, g2, t, n * k, min(k, n * k), panel),
            check_lemma_c(g1, g2, t, n, k, panel),
            check_corollary(g1, g2, t, min(n, 4), min(k, 4), panel),
            check_corollary_recomposition(g1, g2, t, min(n, 3), min(k, 3), panel),
            check_swap_identity(g1, g2, t / max(n, 1), n, panel),
        ]
        results.extend(checks)
        for c in checks:
            if not c.passed:
                failures.append({"trial": trial, "seed": seed, "states": m_states,
                                 "t": t, "n": n, "k": k, "j": j,
                                 "identity": c.identity_name,
                                 "deviation": c.max_deviation})
    return results, failures

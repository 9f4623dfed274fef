"""Numeric verification of the bounded-loss robustness guarantees.

Under symmetric label noise with rate eta <= 1 - 1/c, the soft-weighting
and tempered losses admit sandwich bounds relating the risks of the
clean-risk minimizer f* and the noisy-risk minimizer f^:

    0 <= R_noisy(f*) - R_noisy(f^) <= noisy_gap_bound
    clean_gap_bound <= R_clean(f*) - R_clean(f^) <= 0

This module evaluates the bound constants in closed form and checks the
inequalities by exhaustive minimization over a finite world: K points,
each assigned a probability vector from a delta-spaced simplex grid.  The
risk is a sum of independent per-point terms, so the global minimizer is
found by scanning the grid once per point instead of enumerating the
product hypothesis space.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .losses import PROB_FLOOR

GRID_BUDGET = 10**7


@dataclass
class BoundConstants:
    """Closed-form sandwich-bound constants for one (loss, c, eta) setting."""

    noisy_gap_bound: float  # >= 0, caps R_noisy(f*) - R_noisy(f^)
    clean_gap_bound: float  # <= 0, floors R_clean(f*) - R_clean(f^)
    variant: str
    c: int
    eta: float


@dataclass
class FiniteWorld:
    """K points with clean labels under symmetric label noise."""

    labels: np.ndarray
    c: int
    delta: float
    eta: float

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if self.c < 2:
            raise ConfigError("need at least two classes")
        if np.any(self.labels < 0) or np.any(self.labels >= self.c):
            raise ConfigError("labels out of range")
        if not 0.0 <= self.eta <= 1.0 - 1.0 / self.c:
            raise DomainError(f"eta={self.eta} violates eta <= 1 - 1/c")
        if not 0.0 < self.delta <= 0.5:
            raise ConfigError("delta must lie in (0, 0.5]")


@dataclass
class RiskReport:
    """Minimizers, risks, bound constants, and slack for one verification."""

    f_star: np.ndarray
    f_hat: np.ndarray
    clean_risk_star: float
    clean_risk_hat: float
    noisy_risk_star: float
    noisy_risk_hat: float
    noisy_gap_bound: float
    clean_gap_bound: float
    grid_tol: float
    noisy_sandwich_ok: bool
    clean_sandwich_ok: bool
    noisy_slack: float
    clean_slack: float

    def as_dict(self):
        return {
            "clean_risk_star": self.clean_risk_star,
            "clean_risk_hat": self.clean_risk_hat,
            "noisy_risk_star": self.noisy_risk_star,
            "noisy_risk_hat": self.noisy_risk_hat,
            "noisy_gap_bound": self.noisy_gap_bound,
            "clean_gap_bound": self.clean_gap_bound,
            "grid_tol": self.grid_tol,
            "noisy_sandwich_ok": bool(self.noisy_sandwich_ok),
            "clean_sandwich_ok": bool(self.clean_sandwich_ok),
            "noisy_slack": self.noisy_slack,
            "clean_slack": self.clean_slack,
        }


def bound_constants(variant, c, eta, hyper):
    """Evaluate the sandwich-bound constants for polysoft or bi_tempered."""
    if c < 2:
        raise DomainError("need at least two classes")
    if not 0.0 <= eta <= 1.0 - 1.0 / c:
        raise DomainError(f"eta={eta} violates the hypothesis eta <= 1 - 1/c")
    denom = c - 1 - eta * c
    if denom <= 0:
        raise DomainError(
            f"eta={eta} leaves c - 1 - eta*c <= 0; the clean-gap constant needs eta < 1 - 1/c"
        )
    if variant == "polysoft":
        lam, d = hyper.lam, hyper.d
        if d <= 1.0:
            raise DomainError("polysoft bound needs d > 1")
        if lam < math.log(c) - 1e-12:
            raise DomainError(
                f"polysoft bound needs lam >= log(c) = {math.log(c):.6f}, got {lam}"
            )
        a = c * (d - 1.0) * eta / (d * (c - 1.0)) * (lam - math.log(c))
        a_prime = c * (d - 1.0) * eta / (d * denom) * (math.log(c) - lam)
        return BoundConstants(a, a_prime, variant, c, eta)
    if variant == "bi_tempered":
        t1 = hyper.t1
        if not 0.0 <= t1 < 1.0:
            raise DomainError("bi_tempered bound needs 0 <= t1 < 1")
        if not hyper.t2 > 1.0:
            raise DomainError("bi_tempered bound needs t2 > 1")
        tail = (c - c**t1) / ((1.0 - t1) * (2.0 - t1))
        a = eta / (1.0 - t1) - eta * tail / (c - 1.0)
        a_prime = eta * tail / denom - eta * (c - 1.0) / ((1.0 - t1) * denom)
        return BoundConstants(a, a_prime, variant, c, eta)
    raise DomainError(
        f"no closed-form bound constants for variant {variant!r}; "
        "only polysoft and bi_tempered are covered"
    )


def simplex_grid(c, delta):
    """All probability vectors with entries that are multiples of delta."""
    parts = int(round(1.0 / delta))
    if abs(parts * delta - 1.0) > 1e-9:
        raise ConfigError(f"1/delta must be an integer, got delta={delta}")
    count = math.comb(parts + c - 1, c - 1)
    if count > GRID_BUDGET:
        raise ConfigError(f"simplex grid would hold {count} points > budget {GRID_BUDGET}")
    grid = np.empty((count, c))
    for i, cut in enumerate(itertools.combinations(range(parts + c - 1), c - 1)):
        prev = -1
        for j, edge in enumerate(list(cut) + [parts + c - 1]):
            grid[i, j] = edge - prev - 1
            prev = edge
    return grid / parts


def loss_on_simplex(variant, hyper, probs, label):
    """Loss value L(u, label) for rows of probability vectors.

    Vertex entries are clamped by the probability floor before logs and
    powers, matching how the losses treat near-vertex softmax outputs.
    """
    U = np.clip(np.atleast_2d(probs), PROB_FLOOR, 1.0 - PROB_FLOOR)
    uj = U[:, label]
    if variant == "ce":
        return -np.log(uj)
    if variant == "gce":
        return (1.0 - uj**hyper.q) / hyper.q
    if variant == "sl":
        ce_vals = -np.log(uj)
        rce_vals = -hyper.rce_a * (U.sum(axis=1) - uj)
        return hyper.gamma1 * ce_vals + hyper.gamma2 * rce_vals
    if variant == "bi_tempered":
        t1 = hyper.t1
        s1 = 1.0 - t1
        log_term = np.expm1(s1 * np.log(uj)) / s1 if abs(s1) > 1e-8 else np.log(uj)
        tail = (1.0 - (U ** (2.0 - t1)).sum(axis=1)) / (2.0 - t1)
        return -log_term - tail
    if variant == "polysoft":
        ce_vals = -np.log(uj)
        lam, d = hyper.lam, hyper.d
        inside = ce_vals < lam
        u = np.where(inside, 1.0 - ce_vals / lam, 0.0)
        plateau = (d - 1.0) * lam / d
        return np.where(inside, plateau * (1.0 - u ** (d / (d - 1.0))), plateau)
    raise DomainError(f"unknown loss variant {variant!r}")


def _per_point_terms(grid, variant, hyper, label, c, eta, noisy):
    """Expected loss of every grid assignment for one point."""
    per_label = np.stack(
        [loss_on_simplex(variant, hyper, grid, j) for j in range(c)], axis=1
    )
    if not noisy:
        return per_label[:, label]
    others = per_label.sum(axis=1) - per_label[:, label]
    return (1.0 - eta) * per_label[:, label] + eta / (c - 1.0) * others


def exact_risk(world, assignment, variant, hyper, noisy):
    """Exact expected loss of a per-point simplex assignment.

    Uniform over the K points; under noise the label of a point is its
    clean label with probability 1 - eta, otherwise uniform over the
    other classes.
    """
    A = np.atleast_2d(np.asarray(assignment, dtype=float))
    if A.shape != (len(world.labels), world.c):
        raise DomainError(f"assignment shape {A.shape} does not match the world")
    if np.any(A < -1e-12) or np.any(np.abs(A.sum(axis=1) - 1.0) > 1e-9):
        raise DomainError("assignments must be probability vectors")
    total = 0.0
    for k, label in enumerate(world.labels):
        total += float(
            _per_point_terms(A[k : k + 1], variant, hyper, int(label), world.c, world.eta, noisy)[0]
        )
    return total / len(world.labels)


def grid_lipschitz(variant, hyper, c, delta):
    """Max loss slope between adjacent grid points, per unit L1 mass.

    Adjacent means one delta of mass moved between a coordinate pair (an
    L1 displacement of 2 delta); the estimate feeds the grid tolerance
    lipschitz * delta.
    """
    grid = simplex_grid(c, delta)
    worst = 0.0
    for label in range(c):
        base = loss_on_simplex(variant, hyper, grid, label)
        for a in range(c):
            movable = grid[:, a] >= delta - 1e-12
            if not movable.any():
                continue
            for b in range(c):
                if b == a:
                    continue
                moved = grid[movable].copy()
                moved[:, a] -= delta
                moved[:, b] += delta
                vals = loss_on_simplex(variant, hyper, moved, label)
                slope = np.abs(vals - base[movable]) / (2.0 * delta)
                worst = max(worst, float(slope.max()))
    return worst


def riskgap_verify(world, variant, hyper):
    """Check both sandwich inequalities by exhaustive grid minimization.

    The risk is additive over points with independent assignments, so the
    global minimizers decompose into per-point grid scans.
    """
    constants = bound_constants(variant, world.c, world.eta, hyper)
    grid = simplex_grid(world.c, world.delta)
    K = len(world.labels)
    f_star = np.empty((K, world.c))
    f_hat = np.empty((K, world.c))
    for k, label in enumerate(world.labels):
        clean_terms = _per_point_terms(grid, variant, hyper, int(label), world.c, world.eta, False)
        noisy_terms = _per_point_terms(grid, variant, hyper, int(label), world.c, world.eta, True)
        f_star[k] = grid[int(np.argmin(clean_terms))]
        f_hat[k] = grid[int(np.argmin(noisy_terms))]

    r_clean_star = exact_risk(world, f_star, variant, hyper, noisy=False)
    r_clean_hat = exact_risk(world, f_hat, variant, hyper, noisy=False)
    r_noisy_star = exact_risk(world, f_star, variant, hyper, noisy=True)
    r_noisy_hat = exact_risk(world, f_hat, variant, hyper, noisy=True)

    tol = grid_lipschitz(variant, hyper, world.c, world.delta) * world.delta
    noisy_gap = r_noisy_star - r_noisy_hat
    clean_gap = r_clean_star - r_clean_hat
    noisy_ok = -1e-12 <= noisy_gap <= constants.noisy_gap_bound + tol
    clean_ok = constants.clean_gap_bound - tol <= clean_gap <= 1e-12
    return RiskReport(
        f_star, f_hat,
        r_clean_star, r_clean_hat, r_noisy_star, r_noisy_hat,
        constants.noisy_gap_bound, constants.clean_gap_bound,
        tol, noisy_ok, clean_ok,
        constants.noisy_gap_bound + tol - noisy_gap,
        clean_gap - constants.clean_gap_bound + tol,
    )


def label_sum_range(variant, hyper, c, delta):
    """Range of sum_j L(u, j) over the simplex grid (bounded-loss check)."""
    grid = simplex_grid(c, delta)
    sums = np.zeros(len(grid))
    for j in range(c):
        sums += loss_on_simplex(variant, hyper, grid, j)
    return float(sums.min()), float(sums.max())

"""Operational exponents derived from the annealed free energy."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .dmc import Channel
from .phase import BETA_ONE_TOL, psi_total, r_star
from .solver import DEFAULT_CONFIG, SolverConfig, psi_bulk

CHERNOFF_GRID_POINTS = 101
# psi at beta = 0 is only reachable as a limit; the grid's left end is floored here
CHERNOFF_BETA_FLOOR = 1e-3


class RenyiRegimeWarning(UserWarning):
    """The Rényi-rate identification is used outside ``beta >= 1, R > R*(beta)``."""


@dataclass(frozen=True)
class ChernoffResult:
    xi: float
    beta_star: float
    R: float


@dataclass(frozen=True)
class GuessworkResult:
    s: float
    beta: float
    exponent: float
    R: float


@dataclass(frozen=True)
class RenyiRateResult:
    value: float
    beta: float
    R: float
    heuristic: bool


def chernoff_exponent(ch: Channel, R: float,
                      cfg: SolverConfig = DEFAULT_CONFIG) -> ChernoffResult:
    """``max_{0<=beta<=1} [(1-beta) log|Y| - psi(beta, R)]``.

    A 101-point beta grid locates the bracket, a bounded scalar search refines
    it to 1e-6 in beta; tiny negative values are clamped to zero.
    """
    log_y = math.log(ch.ny)

    def objective(beta):
        return (1.0 - beta) * log_y - psi_total(ch, beta, R, cfg).psi_total

    grid = np.linspace(0.0, 1.0, CHERNOFF_GRID_POINTS)
    grid[0] = CHERNOFF_BETA_FLOOR
    values = np.array([objective(b) for b in grid[:-1]] + [0.0])  # psi(1, R) = 0
    k = int(np.argmax(values))
    best_beta, best = float(grid[k]), float(values[k])
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda b: -objective(b) if b < 1 - BETA_ONE_TOL else 0.0,
                              bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-6})
        if -res.fun > best:
            best_beta, best = float(res.x), float(-res.fun)
    if best < 0:
        best = 0.0
    return ChernoffResult(best, best_beta, R)


def renyi_rate(ch: Channel, beta: float, R: float,
               cfg: SolverConfig = DEFAULT_CONFIG) -> RenyiRateResult:
    """Per-letter Rényi entropy of order beta of a typical code's output mixture,
    ``psi_b(beta, R) / (1 - beta)``.

    Outside ``beta >= 1, R > R*(beta)`` the value is still returned but flagged
    ``heuristic`` and a :class:`RenyiRegimeWarning` is issued.
    """
    if abs(beta - 1.0) <= BETA_ONE_TOL:
        raise ValueError("the Rényi rate formula is singular at beta = 1")
    value = psi_bulk(ch, beta, R, cfg).value / (1.0 - beta)
    heuristic = beta < 1 or R <= r_star(ch, beta, cfg)
    if heuristic:
        warnings.warn(f"(beta={beta}, R={R}) lies outside beta >= 1, R > R*(beta); "
                      "the Rényi-rate value is heuristic", RenyiRegimeWarning, stacklevel=2)
    return RenyiRateResult(value, beta, R, heuristic)


def guesswork_exponent(ch: Channel, s: float, R: float,
                       cfg: SolverConfig = DEFAULT_CONFIG) -> GuessworkResult:
    """Exponent of ``E[G(Y^n)^s]``: ``(1+s) psi(1/(1+s), R)``."""
    if not s > 0:
        raise ValueError(f"s must be positive, got {s}")
    beta = 1.0 / (1.0 + s)
    psi = psi_total(ch, beta, R, cfg).psi_total
    return GuessworkResult(s, beta, s / (1.0 - beta) * psi, R)

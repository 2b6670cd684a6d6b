"""Total annealed free energy, the bulk/sparse phase boundary and region labels."""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .dmc import Channel, mutual_info, JointDistribution, psi_iid
from .solver import (DEFAULT_CONFIG, BranchResult, SolverConfig, bulk_unconstrained,
                     c_beta, i_sparse, psi_bulk, psi_sparse)

BETA_ONE_TOL = 1e-9

# figure-reproduction defaults for the Z-channel
DEFAULT_BETA_GRID = (1.0, 5.0, 0.02)
DEFAULT_RATE_GRID = (0.005, 0.6, 0.005)


class Region(str, enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    UNDEFINED = "undefined_for_beta_lt_1"


@dataclass(frozen=True)
class PhasePoint:
    beta: float
    R: float
    psi_bulk: float
    psi_sparse: float
    psi_total: float
    region: Region
    i_bulk: float
    i_sparse: float
    r_star: float | None

    @property
    def dominant(self) -> str:
        return "bulk" if self.psi_bulk >= self.psi_sparse else "sparse"

    def as_dict(self) -> dict:
        return {
            "beta": self.beta,
            "R": self.R,
            "psi_bulk": self.psi_bulk,
            "psi_sparse": self.psi_sparse,
            "psi_total": self.psi_total,
            "dominant": self.dominant,
            "region": self.region.value,
            "i_bulk": self.i_bulk,
            "i_sparse": self.i_sparse,
            "r_star": self.r_star,
        }


@dataclass
class CurveTable:
    """Columns of computed quantities sampled along one axis."""

    axis: str
    points: list
    columns: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, col in self.columns.items():
            if len(col) != len(self.points):
                raise ValueError(f"column {name!r} has {len(col)} rows, expected {len(self.points)}")

    def column(self, name) -> np.ndarray:
        return np.asarray(self.columns[name], dtype=float)

    def header(self) -> list:
        return [self.axis, *self.columns]

    def rows(self):
        for i, p in enumerate(self.points):
            yield [p, *(col[i] for col in self.columns.values())]


def _is_beta_one(beta):
    return abs(beta - 1.0) <= BETA_ONE_TOL


def r_star(ch: Channel, beta: float, cfg: SolverConfig = DEFAULT_CONFIG,
           unconstrained: BranchResult | None = None) -> float:
    """Annealed phase boundary ``(C(beta) - psi_{b,u}(beta)) / (beta - 1)``; ``I(X;Y)`` at 1."""
    if beta < 1 - BETA_ONE_TOL:
        raise ValueError(f"the phase boundary is only defined for beta >= 1, got {beta}")
    if _is_beta_one(beta):
        return mutual_info(JointDistribution(ch, ch.W))
    u = unconstrained if unconstrained is not None else bulk_unconstrained(ch, beta, cfg)
    return (c_beta(ch, beta) - u.value) / (beta - 1.0)


def _region(R, ib, rs, is_):
    if R > is_:
        return Region.A
    if R > rs:
        return Region.B
    if R > ib:
        return Region.C
    return Region.D


def classify_region(ch: Channel, beta: float, R: float,
                    cfg: SolverConfig = DEFAULT_CONFIG) -> Region:
    """Region of ``(beta, R)``; points on a curve go to the region below it."""
    if beta < 1 - BETA_ONE_TOL:
        raise ValueError(f"regions are only defined for beta >= 1, got {beta}")
    u = bulk_unconstrained(ch, beta, cfg)
    return _region(R, u.optimizer_mi, r_star(ch, beta, cfg, u), i_sparse(ch, beta))


def psi_total(ch: Channel, beta: float, R: float,
              cfg: SolverConfig = DEFAULT_CONFIG) -> PhasePoint:
    """Both branches, their maximum and (for ``beta >= 1``) the region of ``(beta, R)``."""
    u = bulk_unconstrained(ch, beta, cfg)
    bulk = psi_bulk(ch, beta, R, cfg, unconstrained=u)
    sparse = psi_sparse(ch, beta, R, cfg)
    i_s = i_sparse(ch, beta)
    if beta >= 1 - BETA_ONE_TOL:
        rs = r_star(ch, beta, cfg, u)
        region = _region(R, u.optimizer_mi, rs, i_s)
    else:
        rs, region = None, Region.UNDEFINED
    return PhasePoint(beta, R, bulk.value, sparse.value, max(bulk.value, sparse.value),
                      region, u.optimizer_mi, i_s, rs)


def _pool_map(fn, items, threads):
    if threads == 1 or len(items) < 2:
        return [fn(x) for x in items]
    workers = os.cpu_count() if threads == 0 else threads
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _boundary_row(beta, ch, cfg):
    u = bulk_unconstrained(ch, beta, cfg)
    return u.optimizer_mi, r_star(ch, beta, cfg, u), i_sparse(ch, beta)


def _branch_row(beta, ch, R, cfg):
    p = psi_total(ch, beta, R, cfg)
    return p.psi_bulk, p.psi_sparse, p.psi_total, psi_iid(ch, beta)


def _metadata(ch, cfg, **extra):
    return {"channel_hash": ch.digest(), "solver_config": _cfg_dict(cfg), **extra}


def _cfg_dict(cfg):
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.__dict__.items()}


def boundary_curves(ch: Channel, beta_grid, cfg: SolverConfig = DEFAULT_CONFIG,
                    threads: int = 1) -> CurveTable:
    """``I^b``, ``R*`` and ``I^s`` along a sorted grid of ``beta >= 1``."""
    grid = [float(b) for b in beta_grid]
    if any(b < 1 - BETA_ONE_TOL or b > cfg.beta_max for b in grid):
        raise ValueError(f"beta grid must lie in [1, {cfg.beta_max}]")
    if grid != sorted(grid):
        raise ValueError("beta grid must be sorted")
    rows = _pool_map(partial(_boundary_row, ch=ch, cfg=cfg), grid, threads)
    cols = dict(zip(("i_bulk", "r_star", "i_sparse"), map(list, zip(*rows)))) if rows else \
        {"i_bulk": [], "r_star": [], "i_sparse": []}
    return CurveTable("beta", grid, cols, _metadata(ch, cfg))


def branch_curves(ch: Channel, R: float, beta_grid, cfg: SolverConfig = DEFAULT_CONFIG,
                  threads: int = 1) -> CurveTable:
    """``psi_b``, ``psi_s``, ``psi`` and ``psi_iid`` as functions of beta at fixed rate."""
    grid = [float(b) for b in beta_grid]
    rows = _pool_map(partial(_branch_row, ch=ch, R=R, cfg=cfg), grid, threads)
    names = ("psi_bulk", "psi_sparse", "psi_total", "psi_iid")
    cols = dict(zip(names, map(list, zip(*rows)))) if rows else {n: [] for n in names}
    gap = max((abs(b - i) for b, i in zip(cols["psi_bulk"], cols["psi_iid"])
               if math.isfinite(b)), default=math.nan)
    return CurveTable("beta", grid, cols, _metadata(ch, cfg, rate=R, max_bulk_iid_gap=gap))

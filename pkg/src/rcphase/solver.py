"""Bulk and sparse branches of the annealed free energy.

Both branches are optimizations over the conditional rows ``Q_{Y|X}`` with the
input marginal pinned to ``P_X``:

* bulk:   sup over ``I_Q <= R`` of ``(1-beta) I_Q + F(Q)``
* sparse: ``R (1-beta)`` + sup over ``I_Q > R`` of ``F(Q)``

with ``F(Q) = H_Q(Y|X) - beta ell(Q) = C(beta) - D(Q || Q^s_beta | P_X)``.

The bulk objective is concave in ``Q`` for every ``beta >= 0`` and the set
``I_Q <= R`` is convex, so the bulk branch is solved by an alternating
maximization (a Blahut-Arimoto style fixed point) wrapped in a bisection on the
Lagrange multiplier of the rate constraint. The sparse constraint set
``I_Q >= R`` is not convex; its numeric path uses multi-start penalty ascent.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .dmc import Channel, JointDistribution, _mutual_info

# alternation budget for the optional sparse Lagrangian route
LAGRANGIAN_BUDGET = 20_000


class SolverError(RuntimeError):
    """A numeric solve did not reach its tolerance."""

    def __init__(self, message, beta=None):
        super().__init__(message)
        self.beta = beta


class Method(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    CONSTRAINED_NUMERIC = "constrained_numeric"


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the numeric paths.

    ``coarse_grid_points_per_row`` and ``penalty_weight_schedule`` drive the
    multi-start sparse search; ``refine_iterations`` bounds each local ascent;
    ``convergence_tol`` is the value tolerance of a local ascent.
    """

    coarse_grid_points_per_row: int = 21
    refine_iterations: int = 200
    convergence_tol: float = 1e-9
    penalty_weight_schedule: tuple = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)
    tol_mi: float = 1e-7
    fixed_point_tol: float = 1e-13
    max_alternations: int = 500_000
    max_starts: int = 64
    max_vertices: int = 100_000
    beta_max: float = 64.0

    def __post_init__(self):
        if self.coarse_grid_points_per_row < 2 or self.refine_iterations < 1:
            raise ValueError("grid points must be >= 2 and iterations >= 1")
        if self.max_starts < 1 or self.max_alternations < 1:
            raise ValueError("counts must be >= 1")
        if min(self.convergence_tol, self.tol_mi, self.fixed_point_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if not self.penalty_weight_schedule or min(self.penalty_weight_schedule) <= 0:
            raise ValueError("penalty weights must be positive")


DEFAULT_CONFIG = SolverConfig()


@dataclass(frozen=True, eq=False)
class BranchResult:
    value: float
    optimizer: JointDistribution | None
    optimizer_mi: float
    constraint_active: bool
    method: Method

    @property
    def feasible(self) -> bool:
        return self.optimizer is not None


def _check_beta(beta, cfg=None, numeric=False):
    if not beta >= 0 or not math.isfinite(beta):
        raise ValueError(f"beta must be a finite non-negative number, got {beta}")
    if numeric:
        # beta = 0 puts the bulk optimizer on the simplex boundary, where the
        # fixed point converges only sublinearly
        if beta == 0:
            raise ValueError("numeric solves need beta > 0")
        if cfg is not None and beta > cfg.beta_max:
            raise ValueError(f"beta={beta} exceeds beta_max={cfg.beta_max} for numeric solves")


def _check_rate(R):
    if not R > 0 or not math.isfinite(R):
        raise ValueError(f"rate must be positive and finite, got {R}")


def _log_tilt(ch: Channel, beta: float) -> np.ndarray:
    # beta = 0 is the limit: uniform over the support of each row
    if beta == 0:
        L = np.where(ch.support, 0.0, -np.inf)
    else:
        L = beta * ch.log_W
    return L - logsumexp(L, axis=1, keepdims=True)


def sparse_tilt(ch: Channel, beta: float) -> JointDistribution:
    """Per-row Gibbs tilt ``Q(y|x) ∝ W(y|x)^beta``, the global maximizer of F."""
    _check_beta(beta)
    if beta == 1.0:
        return JointDistribution(ch, ch.W.copy())
    return JointDistribution(ch, np.exp(_log_tilt(ch, beta)))


def c_beta(ch: Channel, beta: float) -> float:
    """``C(beta) = sum_x P_X(x) log sum_y W(y|x)^beta``."""
    _check_beta(beta)
    if beta == 1:
        return 0.0
    if beta == 0:
        return float(ch.p_x @ np.log(ch.support.sum(axis=1)))
    return float(ch.p_x @ logsumexp(beta * ch.log_W, axis=1))


def i_sparse(ch: Channel, beta: float) -> float:
    """Mutual information of the tilted channel."""
    return _mutual_info(ch.p_x, sparse_tilt(ch, beta).cond)


# -- objectives on raw conditional-row arrays ---------------------------------

def _f_value(ch, Q, beta):
    with np.errstate(divide="ignore", invalid="ignore"):
        logQ = np.where(Q > 0, np.log(Q), 0.0)
        logW = np.where(Q > 0, ch.log_W, 0.0)
    return float(ch.p_x @ (Q * (beta * logW - logQ)).sum(axis=1))


def _bulk_value(ch, Q, beta):
    return (1.0 - beta) * _mutual_info(ch.p_x, Q) + _f_value(ch, Q, beta)


def bulk_objective(Q: JointDistribution, beta: float) -> float:
    """``(1 - beta) I_Q + F(Q)``, equivalently ``(1-beta) H_Q(Y) - beta D(Q||W|P_X)``."""
    if not Q.on_support:
        return -math.inf
    return _bulk_value(Q.channel, Q.cond, beta)


# -- bulk branch ----------------------------------------------------------------

def _lagrangian_value(ch, logV, kappa, logQ):
    Q = np.exp(logQ)
    with np.errstate(invalid="ignore"):
        div = np.where(Q > 0, Q * (logQ - logV), 0.0).sum(axis=1)
    return -kappa * _mutual_info(ch.p_x, Q) - float(ch.p_x @ div)


def _fixed_point_map(ch, logV, kappa, logQ):
    Q = np.exp(logQ)
    log_qy = np.log(ch.p_x @ Q)
    if kappa > 0:
        new = (logV + kappa * log_qy) / (1.0 + kappa)
    else:
        new = logV + (-kappa) * (np.log(ch.p_x)[:, None] + logQ - log_qy)
    new = np.where(np.isfinite(logV), new, -np.inf)
    return new - logsumexp(new, axis=1, keepdims=True)


def _alternate(ch, logV, kappa, cfg, logQ=None, beta=None):
    """Maximize ``-kappa I_Q - D(Q || V | P_X)`` over rows supported on ``V``.

    For ``kappa >= 0`` the fixed-point map is the alternating minimization of
    ``kappa D(Q||R|P) + D(Q||V|P)`` over ``(Q, R)``; for ``kappa < 0`` it is the
    alternating maximization against the backward channel ``Phi(x|y)``. Both are
    monotone; for ``kappa >= -1`` the problem is concave and the fixed point is
    the global optimum. Iterations are extrapolated with SQUAREM, falling back
    to the plain step whenever extrapolation would decrease the objective.
    """
    if kappa == 0:
        return logV.copy()
    finite = np.isfinite(logV)
    x = logV.copy() if logQ is None else np.where(finite, logQ, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        n = 0
        while n < cfg.max_alternations:
            x1 = _fixed_point_map(ch, logV, kappa, x)
            x2 = _fixed_point_map(ch, logV, kappa, x1)
            n += 2
            if np.abs(np.exp(x2) - np.exp(x1)).max() < cfg.fixed_point_tol:
                return x2
            r = np.where(finite, x1 - x, 0.0)
            v = np.where(finite, x2 - x1 - r, 0.0)
            nv = np.linalg.norm(v)
            alpha = min(-np.linalg.norm(r) / nv, -1.0) if nv > 0 else -1.0
            xe = np.where(finite, x - 2.0 * alpha * r + alpha * alpha * v, -np.inf)
            xe -= logsumexp(xe, axis=1, keepdims=True)
            xe = _fixed_point_map(ch, logV, kappa, xe)
            n += 1
            if (np.all(np.isfinite(xe[finite]))
                    and _lagrangian_value(ch, logV, kappa, xe)
                    >= _lagrangian_value(ch, logV, kappa, x2)):
                x = xe
            else:
                x = x2
    raise SolverError(
        f"alternating maximization did not converge (beta={beta}, kappa={kappa})", beta)


def _bulk_lagrangian(ch, beta, lam, cfg, logQ0=None):
    # maximizer of (1-beta-lam) I_Q + F(Q) = C - (beta-1+lam) I_Q - D(Q||Q^s)
    return _alternate(ch, _log_tilt(ch, beta), beta - 1.0 + lam, cfg, logQ0, beta)


def bulk_unconstrained(ch: Channel, beta: float,
                       cfg: SolverConfig = DEFAULT_CONFIG) -> BranchResult:
    """Unconstrained bulk maximum ``psi_{b,u}(beta)`` with ``Q^b_beta`` and ``I^b(beta)``."""
    _check_beta(beta, cfg, numeric=True)
    Q = np.exp(_bulk_lagrangian(ch, beta, 0.0, cfg))
    return BranchResult(
        value=_bulk_value(ch, Q, beta),
        optimizer=JointDistribution(ch, Q),
        optimizer_mi=_mutual_info(ch.p_x, Q),
        constraint_active=False,
        method=Method.CONSTRAINED_NUMERIC,
    )


def i_bulk(ch: Channel, beta: float, cfg: SolverConfig = DEFAULT_CONFIG) -> float:
    return bulk_unconstrained(ch, beta, cfg).optimizer_mi


def _infeasible(active=True):
    return BranchResult(-math.inf, None, math.nan, active, Method.CONSTRAINED_NUMERIC)


def psi_bulk(ch: Channel, beta: float, R: float, cfg: SolverConfig = DEFAULT_CONFIG,
             unconstrained: BranchResult | None = None) -> BranchResult:
    """Bulk branch ``psi_b(beta, R)``.

    When ``R < I^b(beta)`` the multiplier ``lam`` of ``I_Q <= R`` is located by
    bisection so that the returned optimizer has ``R - tol_mi < I_Q <= R``.
    An empty feasible set gives ``value = -inf`` and ``optimizer = None``.
    """
    _check_rate(R)
    u = unconstrained if unconstrained is not None else bulk_unconstrained(ch, beta, cfg)
    if u.optimizer_mi <= R:
        return u

    def mi(logQ):
        return _mutual_info(ch.p_x, np.exp(logQ))

    with np.errstate(divide="ignore"):
        lo, log_lo = 0.0, np.log(u.optimizer.cond)
    hi = 1.0
    while True:
        log_hi = _bulk_lagrangian(ch, beta, hi, cfg, log_lo)
        if mi(log_hi) <= R:
            break
        if hi > 1e9:
            return _infeasible()
        lo, log_lo = hi, log_hi
        hi *= 8.0
    for _ in range(400):
        if R - mi(log_hi) < cfg.tol_mi:
            break
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        log_mid = _bulk_lagrangian(ch, beta, mid, cfg, log_hi)
        if mi(log_mid) <= R:
            hi, log_hi = mid, log_mid
        else:
            lo, log_lo = mid, log_mid
    Q = np.exp(log_hi)
    # the objective is concave with its peak at Q^b, so closing the last gap to
    # I_Q = R along the segment toward Q^b can only raise it
    d = u.optimizer.cond - Q
    t = _segment_root(lambda t: R - _mutual_info(ch.p_x, Q + t * d), 0.0, 1.0)
    Q = Q + t * d
    I = _mutual_info(ch.p_x, Q)
    if R - I >= cfg.tol_mi:
        raise SolverError(
            f"bulk constraint polish stalled at |I_Q - R| = {R - I:.3g} (beta={beta})", beta)
    return BranchResult(_bulk_value(ch, Q, beta), JointDistribution(ch, Q), I, True,
                        Method.CONSTRAINED_NUMERIC)


# -- sparse branch --------------------------------------------------------------

def _best_vertex(ch, cfg):
    supports = [np.flatnonzero(row) for row in ch.support]
    total = math.prod(len(s) for s in supports)
    if total <= cfg.max_vertices:
        choices = itertools.product(*supports)
    else:
        rng = np.random.default_rng(0)
        choices = (tuple(rng.choice(s) for s in supports) for _ in range(cfg.max_vertices))
    best, best_ys = -1.0, None
    for ys in choices:
        q_y = np.bincount(ys, weights=ch.p_x, minlength=ch.ny)
        q_y = q_y[q_y > 0]
        h = float(-(q_y * np.log(q_y)).sum())
        if h > best:
            best, best_ys = h, ys
    Q = np.zeros((ch.nx, ch.ny))
    Q[np.arange(ch.nx), list(best_ys)] = 1.0
    return max(best, 0.0), Q


def max_mutual_info(ch: Channel, cfg: SolverConfig = DEFAULT_CONFIG) -> float:
    """Largest ``I_Q`` over rows supported on W.

    ``I_Q`` is convex in the rows, so the maximum sits on a vertex (one
    deterministic output per input). Vertices are enumerated exhaustively up to
    ``cfg.max_vertices``; beyond that a fixed random sample is used (best effort).
    """
    return _best_vertex(ch, cfg)[0]


class _RowParam:
    """Softmax logits for the free entries of each row (entries on supp W)."""

    def __init__(self, ch: Channel):
        self.ch = ch
        self.rows = [np.flatnonzero(r) for r in ch.support]
        self.free = [i for i, s in enumerate(self.rows) if len(s) > 1]
        self.base = (ch.W > 0).astype(float) * (ch.support.sum(axis=1) == 1)[:, None]
        self.slices = []
        k = 0
        for i in self.free:
            self.slices.append(slice(k, k + len(self.rows[i])))
            k += len(self.rows[i])
        self.size = k

    def to_q(self, z):
        Q = self.base.copy()
        for i, sl in zip(self.free, self.slices):
            v = z[sl] - z[sl].max()
            e = np.exp(v)
            Q[i, self.rows[i]] = e / e.sum()
        return Q

    def from_q(self, Q, floor=1e-9):
        z = np.empty(self.size)
        for i, sl in zip(self.free, self.slices):
            z[sl] = np.log(np.maximum(Q[i, self.rows[i]], floor))
        return z

    def pullback(self, Q, G):
        """Gradient w.r.t. logits from a gradient ``G`` w.r.t. the rows."""
        g = np.empty(self.size)
        for i, sl in zip(self.free, self.slices):
            q = Q[i, self.rows[i]]
            gi = G[i, self.rows[i]]
            g[sl] = q * (gi - q @ gi)
        return g


def _grid_starts(param: _RowParam, cfg: SolverConfig):
    g = cfg.coarse_grid_points_per_row - 1
    per_row = []
    for i in param.free:
        k = len(param.rows[i])
        pts = [np.array(c) / g for c in _compositions(g, k)]
        per_row.append(pts)
    total = math.prod(len(p) for p in per_row)
    if total <= cfg.max_starts:
        combos = list(itertools.product(*per_row))
    else:
        rng = np.random.default_rng(0)
        combos = [tuple(p[rng.integers(len(p))] for p in per_row)
                  for _ in range(cfg.max_starts)]
    for combo in combos:
        Q = param.base.copy()
        for i, pt in zip(param.free, combo):
            Q[i, param.rows[i]] = pt
        yield Q


def _compositions(total, parts):
    # all non-negative integer vectors of length `parts` summing to `total`
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + parts - 2 - prev)
        yield out


def _segment_root(fun, a, b, iters=200):
    """Bisection for the sign change of ``fun`` on ``[a, b]``; ``fun(a) >= 0 > fun(b)``.
    Returns the last point with ``fun >= 0``."""
    for _ in range(iters):
        m = 0.5 * (a + b)
        if m in (a, b):
            break
        if fun(m) >= 0:
            a = m
        else:
            b = m
    return a


def _sparse_numeric(ch, beta, R, cfg, extra_candidates=()):
    param = _RowParam(ch)
    T = np.exp(_log_tilt(ch, beta))
    p_x = ch.p_x
    logW = np.where(ch.support, ch.log_W, 0.0)

    def mi(Q):
        return _mutual_info(p_x, Q)

    def objective(z, w):
        Q = param.to_q(z)
        q_y = p_x @ Q
        with np.errstate(divide="ignore", invalid="ignore"):
            logQ = np.where(Q > 0, np.log(Q), 0.0)
            log_ratio = np.where(Q > 0, logQ - np.log(q_y), 0.0)
        F = float(p_x @ (Q * (beta * logW - logQ)).sum(axis=1))
        I = float((p_x[:, None] * Q * log_ratio).sum())
        gF = p_x[:, None] * (beta * logW - logQ - 1.0)
        gI = p_x[:, None] * log_ratio
        short = max(0.0, R - I)
        val = -F + w * short ** 2
        G = -gF - 2.0 * w * short * gI
        return val, param.pullback(Q, G)

    top, V = _best_vertex(ch, cfg)

    def polish(Q):
        # both moves stay on segments inside the simplex: toward the tilt while
        # I_Q exceeds R (F rises), toward the most informative vertex to close a
        # shortfall (I_Q is convex there and reaches top >= R)
        if mi(Q) >= R:
            if mi(T) >= R:
                return Q
            t = _segment_root(lambda t: mi(Q + t * (T - Q)) - R, 0.0, 1.0)
            return Q + t * (T - Q)
        # a penalty run stops just short of R: an exponentiated-gradient step on
        # I_Q keeps every row on its support and raises I_Q at first order
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(Q > 0, np.log(Q) - np.log(p_x @ Q), 0.0)

        def tilt_up(t):
            E = Q * np.exp(t * (g - g.max(axis=1, keepdims=True)))
            return E / E.sum(axis=1, keepdims=True)

        lo, hi = 0.0, 1e-9
        while hi < 1e3 and mi(tilt_up(hi)) < R:
            lo, hi = hi, hi * 2.0
        if hi < 1e3:
            t = _segment_root(lambda t: mi(tilt_up(t)) - R, hi, lo)
            return tilt_up(t)
        # toward V, I_Q may dip before it rises: bisect the first crossing
        ts = np.linspace(0.0, 1.0, 257)
        k = next(i for i, t in enumerate(ts) if mi(Q + t * (V - Q)) >= R)
        t = _segment_root(lambda t: mi(Q + t * (V - Q)) - R, ts[k], ts[k - 1])
        return Q + t * (V - Q)

    candidates = [(_f_value(ch, Q, beta), Q) for Q in extra_candidates if mi(Q) >= R]
    if top < R:
        raise SolverError(f"rate R={R} exceeds the largest attainable I_Q={top} (beta={beta})",
                          beta)
    # the segment from the most informative vertex to the tilt always crosses I = R
    Q = polish(V)
    candidates.append((_f_value(ch, Q, beta), Q))
    for Q0 in _grid_starts(param, cfg):
        z = param.from_q(Q0)
        for w in cfg.penalty_weight_schedule:
            res = minimize(objective, z, args=(w,), jac=True, method="L-BFGS-B",
                           options={"maxiter": cfg.refine_iterations,
                                    "ftol": cfg.convergence_tol * 1e-3, "gtol": 1e-12})
            z = res.x
        Q = polish(param.to_q(z))
        candidates.append((_f_value(ch, Q, beta), Q))
    best = max(v for v, _ in candidates)
    ties = [Q for v, Q in candidates if v >= best - 1e-12]
    Q = min(ties, key=lambda q: tuple(q.ravel()))
    return Q


def _sparse_lagrangian(ch, beta, R, cfg):
    """Maximize ``F + mu I_Q`` with ``mu`` bisected so that ``I_Q`` lands on ``R``.

    Returns ``(Q, mu)`` with ``0 <= I_Q - R < tol_mi``, or ``None``. For
    ``mu <= 1`` the Lagrangian is concave, its maximizer is global, and then
    ``Q`` is a certified global optimum of the sparse problem: any ``Q'`` with
    ``I_Q' >= R`` has ``F(Q') <= F(Q) + mu (I_Q - I_Q') <= F(Q)``.
    """
    logV = _log_tilt(ch, beta)
    # near mu = 1 with small beta the map contracts slowly; the route is optional
    # so it gets a short budget and defers to multi-start when it runs out
    cfg = replace(cfg, max_alternations=min(cfg.max_alternations, LAGRANGIAN_BUDGET))

    def solve(mu, warm):
        return _alternate(ch, logV, -mu, cfg, warm, beta)

    def mi(logQ):
        return _mutual_info(ch.p_x, np.exp(logQ))

    lo, log_lo = 0.0, logV
    hi = 0.5
    while True:
        log_hi = solve(hi, log_lo)
        if mi(log_hi) >= R:
            break
        if hi > 1e6:
            return None
        lo, log_lo = hi, log_hi
        hi *= 2.0
    for _ in range(400):
        if mi(log_hi) - R < cfg.tol_mi:
            return np.exp(log_hi), hi
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        log_mid = solve(mid, log_lo)
        if mi(log_mid) >= R:
            hi, log_hi = mid, log_mid
        else:
            lo, log_lo = mid, log_mid
    return None


def psi_sparse(ch: Channel, beta: float, R: float, cfg: SolverConfig = DEFAULT_CONFIG,
               force_numeric: bool = False) -> BranchResult:
    """Sparse branch ``psi_s(beta, R)``.

    Uses ``R (1-beta) + C(beta)`` whenever the tilt is sparse-feasible
    (``R <= I^s(beta)``). Otherwise F is maximized over the closed set
    ``I_Q >= R``: first through the Lagrangian route, accepted outright when its
    multiplier certifies global optimality, else by multi-start penalty ascent
    (which also sees the Lagrangian candidate). ``force_numeric`` runs the
    multi-start path alone, without ever consulting the tilt, which is how the
    closed form is cross-checked. Rates above the largest attainable mutual
    information give ``value = -inf``.
    """
    _check_rate(R)
    _check_beta(beta, cfg, numeric=force_numeric)
    if force_numeric:
        if R > max_mutual_info(ch, cfg):
            return _infeasible()
        Q = _sparse_numeric(ch, beta, R, cfg)
        return _sparse_result(ch, beta, R, Q, cfg)
    tilt = sparse_tilt(ch, beta)
    I_s = _mutual_info(ch.p_x, tilt.cond)
    if R <= I_s:
        return BranchResult(R * (1.0 - beta) + c_beta(ch, beta), tilt, I_s, False,
                            Method.CLOSED_FORM)
    _check_beta(beta, cfg, numeric=True)
    if R > max_mutual_info(ch, cfg):
        return _infeasible()
    try:
        lag = _sparse_lagrangian(ch, beta, R, cfg)
    except SolverError:
        lag = None
    if lag is not None:
        lag = _pull_to_rate(ch, lag[0], tilt.cond, R), lag[1]
    if lag is not None and lag[1] <= 1.0:
        return _sparse_result(ch, beta, R, lag[0], cfg)
    extra = [] if lag is None else [lag[0]]
    Q = _sparse_numeric(ch, beta, R, cfg, extra)
    return _sparse_result(ch, beta, R, Q, cfg)


def _pull_to_rate(ch, Q, T, R):
    # F is concave with its peak at T, so sliding toward T until I_Q = R only helps
    t = _segment_root(lambda t: _mutual_info(ch.p_x, Q + t * (T - Q)) - R, 0.0, 1.0)
    return Q + t * (T - Q)


def _sparse_result(ch, beta, R, Q, cfg):
    I = _mutual_info(ch.p_x, Q)
    return BranchResult(R * (1.0 - beta) + _f_value(ch, Q, beta), JointDistribution(ch, Q),
                        I, I - R < cfg.tol_mi, Method.CONSTRAINED_NUMERIC)

"""Discrete memoryless channels, conditional laws and exact information measures.

All quantities are in nats. ``0 log 0`` is taken as 0 and ``x log(x/0)`` as
``+inf`` for ``x > 0``; infinite values are returned as ``math.inf`` so callers
can test them with :func:`math.isinf`.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

LOAD_TOL = 1e-12
ROW_TOL = 1e-10


class ChannelError(ValueError):
    """Raised when a channel or conditional law violates its invariants."""


def _xlogy(x, y):
    # x*log(y) with 0*log(anything) = 0
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    mask = np.broadcast_to(x > 0, out.shape)
    with np.errstate(divide="ignore"):
        out[mask] = (np.broadcast_to(x, out.shape)[mask]
                     * np.log(np.broadcast_to(y, out.shape)[mask]))
    return out


@dataclass(frozen=True, eq=False)
class Channel:
    """A DMC ``W[x, y]`` together with the input distribution ``P_X``.

    Rows of ``W`` and ``P_X`` must be probability vectors within 1e-12 and every
    input letter must carry positive mass.
    """

    W: np.ndarray
    p_x: np.ndarray
    input_labels: tuple = field(default=())
    output_labels: tuple = field(default=())

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        p_x = np.array(self.p_x, dtype=float)
        if W.ndim != 2 or W.size == 0:
            raise ChannelError("W must be a non-empty matrix")
        if p_x.shape != (W.shape[0],):
            raise ChannelError(
                f"P_X has {p_x.size} entries but W has {W.shape[0]} rows")
        if not np.all(np.isfinite(W)) or np.any(W < 0):
            raise ChannelError("W entries must be finite and non-negative")
        bad = np.flatnonzero(np.abs(W.sum(axis=1) - 1.0) > LOAD_TOL)
        if bad.size:
            raise ChannelError(f"rows {bad.tolist()} of W do not sum to 1")
        if not np.all(np.isfinite(p_x)) or np.any(p_x < 0):
            raise ChannelError("P_X entries must be finite and non-negative")
        if abs(p_x.sum() - 1.0) > LOAD_TOL:
            raise ChannelError("P_X does not sum to 1")
        zero = np.flatnonzero(p_x == 0)
        if zero.size:
            raise ChannelError(
                f"input letters {zero.tolist()} have zero probability; "
                "remove them from the channel")
        W.setflags(write=False)
        p_x.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "p_x", p_x)
        nx, ny = W.shape
        if not self.input_labels:
            object.__setattr__(self, "input_labels", tuple(str(i) for i in range(nx)))
        if not self.output_labels:
            object.__setattr__(self, "output_labels", tuple(str(j) for j in range(ny)))
        if len(self.input_labels) != nx or len(self.output_labels) != ny:
            raise ChannelError("alphabet labels do not match the shape of W")

    @property
    def nx(self) -> int:
        return self.W.shape[0]

    @property
    def ny(self) -> int:
        return self.W.shape[1]

    @property
    def support(self) -> np.ndarray:
        return self.W > 0

    @property
    def log_W(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.W)

    def digest(self) -> str:
        """Short stable hash of ``(W, P_X)`` used to tag output files."""
        payload = json.dumps({"W": self.W.tolist(), "P_X": self.p_x.tolist()})
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def with_input_dist(self, p_x) -> "Channel":
        """Same transition matrix under a new input law; zero-mass letters are dropped."""
        p_x = np.asarray(p_x, dtype=float)
        keep = p_x > 0
        return Channel(self.W[keep], p_x[keep],
                       tuple(np.asarray(self.input_labels, dtype=object)[keep]),
                       self.output_labels)

    def to_dict(self) -> dict:
        return {
            "input_alphabet": list(self.input_labels),
            "output_alphabet": list(self.output_labels),
            "P_X": self.p_x.tolist(),
            "W": self.W.tolist(),
        }


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """``Q_XY(x, y) = P_X(x) Q_{Y|X}(y|x)`` stored through its conditional rows.

    Rows must sum to one within 1e-10 and put no mass where ``W`` is zero.
    """

    channel: Channel
    cond: np.ndarray

    def __post_init__(self):
        Q = np.array(self.cond, dtype=float)
        if Q.shape != self.channel.W.shape:
            raise ChannelError(
                f"conditional rows have shape {Q.shape}, expected {self.channel.W.shape}")
        if np.any(Q < -ROW_TOL) or not np.all(np.isfinite(Q)):
            raise ChannelError("conditional rows must be finite and non-negative")
        if np.any(np.abs(Q.sum(axis=1) - 1.0) > ROW_TOL):
            raise ChannelError("conditional rows must sum to 1")
        Q = np.clip(Q, 0.0, None)
        Q.setflags(write=False)
        object.__setattr__(self, "cond", Q)

    @property
    def on_support(self) -> bool:
        return not np.any((self.cond > 0) & ~self.channel.support)

    @property
    def joint(self) -> np.ndarray:
        return self.channel.p_x[:, None] * self.cond

    @property
    def q_y(self) -> np.ndarray:
        return self.channel.p_x @ self.cond


def output_marginal(ch: Channel) -> np.ndarray:
    """``P_Y(y) = sum_x P_X(x) W(y|x)``."""
    return ch.p_x @ ch.W


def entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    return float(-_xlogy(p, p).sum())


def cond_entropy(Q: JointDistribution) -> float:
    """``H_Q(Y|X)``."""
    Q_ = Q.cond
    return float(-(Q.channel.p_x @ _xlogy(Q_, Q_).sum(axis=1)))


def mutual_info(Q: JointDistribution) -> float:
    """``I_Q(X;Y)``, computed as ``sum Q_XY log(Q_{Y|X}/Q_Y)`` so it is never negative
    by more than round-off."""
    return _mutual_info(Q.channel.p_x, Q.cond)


def _mutual_info(p_x, Q) -> float:
    q_y = p_x @ Q
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(Q > 0, Q / q_y, 1.0)
    return float(max(0.0, (p_x[:, None] * Q * np.log(ratio)).sum()))


def cond_kl(Q: JointDistribution, ch: Channel | None = None) -> float:
    """``D(Q_{Y|X} || W | P_X)``; ``math.inf`` when Q leaves the support of W."""
    ch = Q.channel if ch is None else ch
    Q_ = Q.cond
    if np.any((Q_ > 0) & (ch.W == 0)):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(Q_ > 0, Q_ / np.where(ch.W > 0, ch.W, 1.0), 1.0)
    return float(max(0.0, ch.p_x @ (Q_ * np.log(ratio)).sum(axis=1)))


def ell(Q: JointDistribution, ch: Channel | None = None) -> float:
    """Per-letter exponent of ``W^n(y^n|x^n)``: ``-sum_{x,y} Q_XY log W(y|x)``."""
    ch = Q.channel if ch is None else ch
    Q_ = Q.cond
    if np.any((Q_ > 0) & (ch.W == 0)):
        return math.inf
    return float(-(ch.p_x @ _xlogy(Q_, ch.W).sum(axis=1)))


def f_functional(Q: JointDistribution, ch: Channel | None, beta: float) -> float:
    """``F(Q) = H_Q(Y|X) - beta * ell(Q)``; ``-inf`` off the support of W."""
    l = ell(Q, ch)
    if math.isinf(l):
        return -math.inf
    return cond_entropy(Q) - beta * l


def psi_iid(ch: Channel, beta: float) -> float:
    """Free energy ``log sum_y P_Y(y)^beta`` of the i.i.d. output law."""
    p_y = output_marginal(ch)
    p_y = p_y[p_y > 0]
    if beta == 1:
        return 0.0
    return float(np.logaddexp.reduce(beta * np.log(p_y)))


def load_channel(path) -> Channel:
    """Read a channel spec (YAML key-value document).

    Required keys: ``input_alphabet``, ``output_alphabet``, ``P_X`` and ``W``.
    """
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ChannelError(f"{path}: not a valid channel spec ({exc})") from exc
    if not isinstance(doc, dict):
        raise ChannelError(f"{path}: expected a key-value document")
    missing = [k for k in ("input_alphabet", "output_alphabet", "P_X", "W") if k not in doc]
    if missing:
        raise ChannelError(f"{path}: missing keys {missing}")
    try:
        W = np.array(doc["W"], dtype=float)
        p_x = np.array(doc["P_X"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ChannelError(f"{path}: W and P_X must be numeric ({exc})") from exc
    return Channel(W, p_x, tuple(str(a) for a in doc["input_alphabet"]),
                   tuple(str(b) for b in doc["output_alphabet"]))


def dump_channel(ch: Channel, path) -> None:
    Path(path).write_text(yaml.safe_dump(ch.to_dict(), sort_keys=False), encoding="utf-8")


def bundled_channel_path(name: str = "zchannel") -> Path:
    return Path(__file__).parent / "data" / f"{name}.spec"


def z_channel(p: float = 0.45, p_x=(0.5, 0.5)) -> Channel:
    """Z-channel: input 0 is noiseless, input 1 flips to 0 with probability ``p``."""
    return Channel([[1.0, 0.0], [p, 1.0 - p]], p_x)


def bsc(p: float, p_x=(0.5, 0.5)) -> Channel:
    return Channel([[1.0 - p, p], [p, 1.0 - p]], p_x)

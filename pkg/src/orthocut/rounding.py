"""Gaussian rounding of relaxation solutions.

One shared Gaussian matrix R (m x r, entry variance 1/r) is drawn per round
and every block is mapped to ``V_i = polar(X_i R)``. With r = d the output is
in O(d) or U(d); with r > d it lies on the Stiefel manifold O(d, r).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError, ShapeError
from .linalg import RngSeed, gaussian_matrix, polar
from .problem import BlockPsdMatrix, GroupTuple, StiefelTuple, objective, stacked_objective

TARGETS = ("group", "stiefel")
_CHUNK_ENTRIES = 1 << 21


@dataclass
class RoundingConfig:
    target: str = "group"
    r: Optional[int] = None
    draws: int = 1
    seed: RngSeed = field(default_factory=lambda: RngSeed(0))

    def __post_init__(self):
        if self.target not in TARGETS:
            raise InputError(f"target must be one of {TARGETS}")
        if self.draws < 1:
            raise InputError("draws must be >= 1")
        if self.target == "group" and self.r is not None:
            raise InputError("r is only meaningful for the stiefel target")
        if self.target == "stiefel" and self.r is None:
            raise InputError("stiefel target needs r")
        if not isinstance(self.seed, RngSeed):
            self.seed = RngSeed(int(self.seed))

    def width(self, d: int) -> int:
        if self.target == "group":
            return d
        if self.r < d:
            raise ShapeError(f"stiefel target needs r >= d, got r={self.r}, d={d}")
        return self.r


@dataclass
class DrawStats:
    values: np.ndarray
    mean: float
    max: float
    std_error: float
    best_draw: int

    def to_json(self) -> dict:
        return {
            "draws": int(len(self.values)),
            "mean": self.mean,
            "max": self.max,
            "std_error": self.std_error,
            "best_draw": self.best_draw,
        }


def rounding_matrix(x: StiefelTuple, cfg: RoundingConfig, draw: int = 0) -> np.ndarray:
    """The Gaussian matrix used by draw number ``draw`` (stream ``cfg.seed.spawn(draw)``)."""
    r = cfg.width(x.d)
    return gaussian_matrix(x.width, r, 1.0 / r, x.field, cfg.seed.spawn(draw))


def _round_blocks(x: StiefelTuple, rmat: np.ndarray) -> np.ndarray:
    return polar(x.blocks @ rmat)


def round_once(x: StiefelTuple, cfg: Optional[RoundingConfig] = None, draw: int = 0) -> GroupTuple:
    cfg = cfg or RoundingConfig()
    return GroupTuple(_round_blocks(x, rounding_matrix(x, cfg, draw)))


def draw_values(x: StiefelTuple, c: BlockPsdMatrix, cfg: RoundingConfig) -> np.ndarray:
    """Objective value of each of ``cfg.draws`` independent single roundings."""
    if x.d != c.d or x.n != c.n:
        raise ShapeError("solution does not match the instance")
    r = cfg.width(x.d)
    n, d, m = x.blocks.shape
    per_draw = max(1, m * r + n * d * r)
    chunk = max(1, _CHUNK_ENTRIES // per_draw)
    out = np.empty(cfg.draws)
    for start in range(0, cfg.draws, chunk):
        stop = min(cfg.draws, start + chunk)
        rs = np.stack([rounding_matrix(x, cfg, k) for k in range(start, stop)])
        xr = np.einsum("ndm,bmr->bndr", x.blocks, rs, optimize=True)
        v = polar(xr)
        out[start:stop] = stacked_objective(c, v.reshape(stop - start, n * d, r))
    return out


def round_best_of(x: StiefelTuple, c: BlockPsdMatrix, cfg: RoundingConfig) -> tuple[GroupTuple, float, DrawStats]:
    """Best of ``cfg.draws`` roundings, plus mean/max/standard error of all draws."""
    vals = draw_values(x, c, cfg)
    k = int(np.argmax(vals))
    best = round_once(x, cfg, draw=k)
    se = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    stats = DrawStats(vals, float(np.mean(vals)), float(vals[k]), se, k)
    return best, objective(c, best), stats

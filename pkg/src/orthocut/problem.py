"""Problem instances, feasible tuples and objective evaluation.

An instance is a Hermitian PSD matrix ``C`` of size dn x dn viewed as an
n x n grid of d x d blocks. A feasible point is a stack of n blocks
``T_i`` (d x w) with orthonormal rows; the objective is
``sum_ij Re tr(C_ij^* T_i T_j^*) = tr(C G)`` with ``G = [T_i T_j^*]``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CapacityError, FeasibilityError, FormatError, InputError, ShapeError
from .linalg import (
    adjoint,
    check_field,
    dtype_of,
    field_of,
    gaussian_matrix,
    haar_unitary,
    is_psd,
    polar,
    stiefel_residual,
)

PSD_TOL = 1e-8
HERMITIAN_TOL = 1e-10


class BlockPsdMatrix:
    """Hermitian PSD coefficient matrix with d x d blocks.

    ``factor`` (optional) is a dn x k matrix ``W`` with ``C = W W^*``. The
    builders in this package always supply it; the solver uses it to make
    block updates cost O(k) instead of O(dn).
    """

    def __init__(self, data, d: int, factor=None, check_psd: bool = True):
        data = np.asarray(data)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ShapeError(f"coefficient matrix must be square, got {data.shape}")
        if d < 1 or data.shape[0] % d:
            raise ShapeError(f"size {data.shape[0]} is not a multiple of d={d}")
        if not np.all(np.isfinite(data)):
            raise InputError("coefficient matrix has non-finite entries")
        field = field_of(data)
        data = data.astype(dtype_of(field))
        scale = max(1.0, float(np.max(np.abs(data), initial=0.0)))
        if np.max(np.abs(data - adjoint(data)), initial=0.0) > HERMITIAN_TOL * scale:
            raise InputError("coefficient matrix is not Hermitian")
        data = (data + adjoint(data)) / 2
        if factor is not None:
            factor = np.asarray(factor)
            if factor.ndim != 2 or factor.shape[0] != data.shape[0]:
                raise ShapeError("factor must have dn rows")
            if field == "real" and np.iscomplexobj(factor):
                raise InputError("complex factor for a real instance")
        elif check_psd:
            ok, lam = is_psd(data, tol=PSD_TOL * scale)
            if not ok:
                raise InputError(f"coefficient matrix is not PSD (lambda_min = {lam:.3e})")
        self.data = data
        self.d = int(d)
        self.n = data.shape[0] // self.d
        self.field = field
        self.factor = factor

    @classmethod
    def unsafe(cls, data, d: int) -> "BlockPsdMatrix":
        """Skip the PSD check (Hermitian symmetry is still enforced)."""
        return cls(data, d, check_psd=False)

    @classmethod
    def from_factor(cls, factor, d: int) -> "BlockPsdMatrix":
        factor = np.asarray(factor)
        return cls(factor @ adjoint(factor), d, factor=factor)

    @classmethod
    def from_blocks(cls, blocks, check_psd: bool = True) -> "BlockPsdMatrix":
        blocks = np.asarray(blocks)
        if blocks.ndim != 4 or blocks.shape[0] != blocks.shape[1] or blocks.shape[2] != blocks.shape[3]:
            raise ShapeError(f"blocks must have shape (n, n, d, d), got {blocks.shape}")
        n, _, d, _ = blocks.shape
        data = blocks.transpose(0, 2, 1, 3).reshape(n * d, n * d)
        return cls(data, d, check_psd=check_psd)

    @property
    def size(self) -> int:
        return self.d * self.n

    @property
    def blocks(self) -> np.ndarray:
        """View as an (n, n, d, d) array."""
        d, n = self.d, self.n
        return self.data.reshape(n, d, n, d).transpose(0, 2, 1, 3)

    def block(self, i: int, j: int) -> np.ndarray:
        d = self.d
        return self.data[i * d:(i + 1) * d, j * d:(j + 1) * d]

    def diagonal_blocks(self) -> np.ndarray:
        idx = np.arange(self.n)
        return self.blocks[idx, idx]

    def trace(self) -> float:
        return float(np.real(np.trace(self.data)))

    def trace_norm_bound(self) -> float:
        """sum_ij ||C_ij||_*, an upper bound on the objective at any feasible point."""
        if self.d == 1:
            return float(np.sum(np.abs(self.data)))
        return float(np.sum(np.linalg.svd(self.blocks, compute_uv=False)))

    def to_json(self) -> dict:
        blocks = self.blocks
        out = []
        for i in range(self.n):
            for j in range(self.n):
                b = blocks[i, j]
                out.append([[[float(np.real(v)), float(np.imag(v))] for v in row] for row in b])
        return {"field": self.field, "d": self.d, "n": self.n, "blocks": out}

    @classmethod
    def from_json(cls, obj: dict, check_psd: bool = True) -> "BlockPsdMatrix":
        try:
            field = check_field(obj["field"])
            d, n = int(obj["d"]), int(obj["n"])
            raw = np.asarray(obj["blocks"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed instance: {exc}") from exc
        if raw.shape != (n * n, d, d, 2):
            raise ShapeError(f"blocks must have shape ({n * n}, {d}, {d}, 2), got {raw.shape}")
        vals = raw[..., 0] + 1j * raw[..., 1] if field == "complex" else raw[..., 0]
        if field == "real" and np.any(raw[..., 1] != 0):
            raise FormatError("real instance has nonzero imaginary parts")
        return cls.from_blocks(vals.reshape(n, n, d, d), check_psd=check_psd)

    def __repr__(self):
        return f"BlockPsdMatrix(d={self.d}, n={self.n}, field={self.field!r})"


class _RowOrthonormalTuple:
    """n blocks of shape d x w with T_i T_i^* = I."""

    kind = "tuple"

    def __init__(self, blocks, check: bool = True, tol: float = 1e-8):
        blocks = np.array(blocks)
        if blocks.ndim != 3:
            raise ShapeError(f"blocks must have shape (n, d, w), got {blocks.shape}")
        n, d, w = blocks.shape
        if n < 1 or d < 1 or w < d:
            raise ShapeError(f"invalid block stack shape {blocks.shape}")
        if not np.all(np.isfinite(blocks)):
            raise InputError("blocks have non-finite entries")
        if not np.iscomplexobj(blocks):
            blocks = blocks.astype(np.float64)
        self.blocks = blocks
        self.n, self.d, self.width = n, d, w
        self.field = field_of(blocks)
        if check:
            res = self.residual()
            if res > tol:
                raise FeasibilityError(f"blocks are not row-orthonormal (residual {res:.3e})")

    def residual(self) -> float:
        return stiefel_residual(self.blocks)

    def stacked(self) -> np.ndarray:
        """The dn x w matrix whose i-th row block is T_i."""
        return self.blocks.reshape(self.n * self.d, self.width)

    def gram(self) -> np.ndarray:
        y = self.stacked()
        return y @ adjoint(y)

    def padded(self, width: int) -> np.ndarray:
        if width < self.width:
            raise ShapeError("cannot pad to a smaller width")
        out = np.zeros((self.n, self.d, width), dtype=self.blocks.dtype)
        out[:, :, :self.width] = self.blocks
        return out

    def to_json(self) -> dict:
        b = self.blocks
        return {
            "kind": self.kind,
            "field": self.field,
            "d": self.d,
            "n": self.n,
            "width": self.width,
            "blocks": [[[[float(np.real(v)), float(np.imag(v))] for v in row] for row in blk] for blk in b],
        }

    @classmethod
    def from_json(cls, obj: dict):
        try:
            field = check_field(obj["field"])
            raw = np.asarray(obj["blocks"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed solution: {exc}") from exc
        if raw.ndim != 4 or raw.shape[-1] != 2:
            raise ShapeError(f"blocks must have shape (n, d, w, 2), got {raw.shape}")
        vals = raw[..., 0] + 1j * raw[..., 1] if field == "complex" else raw[..., 0]
        return cls(vals, tol=1e-6)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, d={self.d}, width={self.width}, field={self.field!r})"


class GroupTuple(_RowOrthonormalTuple):
    """Rounded variables in O(d), U(d) (r = d) or the Stiefel manifold O(d, r)."""

    kind = "group"

    @property
    def r(self) -> int:
        return self.width


class StiefelTuple(_RowOrthonormalTuple):
    """Relaxation variables X_i of width m (m = dn for the full relaxation)."""

    kind = "stiefel"

    @property
    def m(self) -> int:
        return self.width


def load_tuple(obj: dict):
    kind = obj.get("kind") if isinstance(obj, dict) else None
    if kind == "stiefel":
        return StiefelTuple.from_json(obj)
    if kind == "group":
        return GroupTuple.from_json(obj)
    raise FormatError(f"unknown tuple kind {kind!r}")


def stacked_objective(c: BlockPsdMatrix, y: np.ndarray) -> np.ndarray:
    """tr(Y^* C Y) for a dn x w matrix or a stack of them. No checks."""
    if c.factor is not None and c.factor.shape[1] < c.size:
        z = adjoint(c.factor) @ y
        vals = np.sum(np.abs(z) ** 2, axis=(-2, -1))
        return vals.astype(np.float64)
    cy = c.data @ y
    vals = np.sum(np.conj(y) * cy, axis=(-2, -1))
    return np.real(vals)


def objective(c: BlockPsdMatrix, t: _RowOrthonormalTuple, feas_tol: float = 1e-6) -> float:
    """sum_ij Re tr(C_ij^* T_i T_j^*)."""
    if t.d != c.d or t.n != c.n:
        raise ShapeError(f"tuple (d={t.d}, n={t.n}) does not match instance (d={c.d}, n={c.n})")
    if c.field == "real" and t.field == "complex":
        raise ShapeError("complex tuple for a real instance")
    res = t.residual()
    if res > feas_tol:
        raise FeasibilityError(f"tuple residual {res:.3e} exceeds {feas_tol:g}")
    y = t.stacked()
    if c.factor is not None and c.factor.shape[1] < c.size:
        return float(stacked_objective(c, y))
    val = np.sum(np.conj(y) * (c.data @ y))
    if abs(np.imag(val)) > 1e-8 * max(1.0, abs(np.real(val))):
        raise InputError(f"objective has imaginary part {np.imag(val):.3e}")
    return float(np.real(val))


def build_random_psd(d: int, n: int, field: str = "real", rank: int | None = None, seed=0) -> BlockPsdMatrix:
    """C = A A^* with A a dn x rank Gaussian matrix (entry variance 1/rank)."""
    check_field(field)
    if rank is None:
        rank = d * n
    if rank < 1 or d < 1 or n < 1:
        raise InputError("d, n and rank must be positive")
    a = gaussian_matrix(d * n, rank, 1.0 / rank, field, seed)
    return BlockPsdMatrix.from_factor(a, d)


def build_procrustes(clouds: Sequence[np.ndarray]) -> BlockPsdMatrix:
    """Instance with C_ij = A_i A_j^T from n point clouds A_i (d x k, columns are points)."""
    if len(clouds) < 1:
        raise InputError("need at least one point cloud")
    arrs = [np.asarray(a, dtype=float) for a in clouds]
    shape = arrs[0].shape
    if len(shape) != 2:
        raise ShapeError("each cloud must be a d x k matrix")
    for a in arrs:
        if a.shape != shape:
            raise ShapeError(f"cloud shapes differ: {a.shape} vs {shape}")
        if not np.all(np.isfinite(a)):
            raise InputError("cloud has non-finite coordinates")
    d = shape[0]
    return BlockPsdMatrix.from_factor(np.vstack(arrs), d)


def procrustes_residual(clouds: Sequence[np.ndarray], t: GroupTuple) -> float:
    """sum_ij ||O_i^T A_i - O_j^T A_j||_F^2."""
    aligned = np.stack([o.T @ np.asarray(a, dtype=float) for o, a in zip(t.blocks, clouds)])
    diff = aligned[:, None] - aligned[None, :]
    return float(np.sum(diff ** 2))


@dataclass
class BruteForceResult:
    value: float
    solution: GroupTuple
    exact: bool


_MAX_ENUM = 1 << 22


def _pow2_at_least(k: int) -> int:
    return 1 << max(0, int(k - 1).bit_length())


def _enumerate_scalar(c: BlockPsdMatrix, choices: np.ndarray) -> tuple[float, np.ndarray]:
    """Maximize x^* C x over x_1 = 1, x_i in ``choices`` (d = 1)."""
    n = c.n
    k = len(choices)
    total = k ** (n - 1)
    if total > _MAX_ENUM:
        raise CapacityError(f"{total} combinations exceed the enumeration cap {_MAX_ENUM}")
    best_val, best_x = -np.inf, None
    chunk = 1 << 16
    cdata = c.data
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        digits = np.empty((len(idx), n), dtype=np.int64)
        digits[:, 0] = 0
        rem = idx.copy()
        for col in range(n - 1, 0, -1):
            digits[:, col] = rem % k
            rem //= k
        x = choices[digits]
        vals = np.real(np.sum(np.conj(x) * (x @ cdata.T), axis=1))
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val, best_x = float(vals[j]), x[j]
    return best_val, best_x


def _polish(c: BlockPsdMatrix, blocks: np.ndarray, sweeps: int = 200) -> np.ndarray:
    """Coordinate ascent O_i <- P(sum_{j != i} C_ij O_j); never decreases the objective."""
    blocks = blocks.copy()
    cb = c.blocks
    for _ in range(sweeps):
        moved = 0.0
        for i in range(c.n):
            b = sum(cb[i, j] @ blocks[j] for j in range(c.n) if j != i)
            if not np.any(b):
                continue
            new = polar(b)
            moved = max(moved, float(np.max(np.abs(new - blocks[i]))))
            blocks[i] = new
        if moved < 1e-12:
            break
    return blocks


def brute_force_opt(c: BlockPsdMatrix, grid: int = 16, restarts: int = 64, seed=0) -> BruteForceResult:
    """Exhaustive or grid/restart search for the group problem on tiny instances.

    * d = 1 real, n <= 16: exact maximum over {+-1}^n.
    * d = 1 complex: maximum over phases exp(2 pi i k / g) where g is ``grid``
      rounded up to a power of two, so finer grids contain coarser ones and the
      value is monotone in ``grid``. Lower bound, not exact.
    * d = 2, n <= 3: angle grid over O(2) (real) or random Haar restarts
      (complex), each polished by coordinate ascent. Lower bound.
    """
    d, n = c.d, c.n
    if d == 1 and c.field == "real":
        if n > 16:
            raise CapacityError("exact enumeration supports n <= 16")
        val, x = _enumerate_scalar(c, np.array([1.0, -1.0]))
        return BruteForceResult(val, GroupTuple(x.reshape(n, 1, 1)), exact=True)
    if d == 1:
        g = _pow2_at_least(max(1, grid))
        phases = np.exp(2j * np.pi * np.arange(g) / g)
        val, x = _enumerate_scalar(c, phases)
        return BruteForceResult(val, GroupTuple(x.reshape(n, 1, 1)), exact=False)
    if d > 2 or n > 3:
        raise CapacityError("approximate oracle supports d <= 2 and n <= 3")

    candidates = []
    if c.field == "real":
        thetas = 2 * np.pi * np.arange(grid) / grid
        rots = np.stack([np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]]) for t in thetas])
        group = np.concatenate([rots, rots @ np.diag([1.0, -1.0])])
        for combo in itertools.product(range(len(group)), repeat=n - 1):
            candidates.append(np.stack([np.eye(2)] + [group[k] for k in combo]))
        vals = [float(stacked_objective(c, b.reshape(2 * n, 2))) for b in candidates]
        order = np.argsort(vals)[::-1][:8]
        starts = [candidates[k] for k in order]
    else:
        rng = np.random.default_rng(np.random.SeedSequence(int(getattr(seed, "seed", seed))))
        starts = [np.stack([haar_unitary(d, "complex", rng) for _ in range(n)]) for _ in range(restarts)]
    best_val, best = -np.inf, None
    for s in starts:
        b = _polish(c, s)
        v = float(stacked_objective(c, b.reshape(d * n, d)))
        if v > best_val:
            best_val, best = v, b
    return BruteForceResult(best_val, GroupTuple(best, tol=1e-6), exact=False)


def dump_json(obj: dict, fp=None, **kw) -> str:
    """Canonical JSON: sorted keys so files diff cleanly."""
    text = json.dumps(obj, sort_keys=True, **kw)
    if fp is not None:
        fp.write(text + "\n")
    return text

"""Small dense linear algebra over the reals and complexes.

Everything here works on numpy arrays. Functions that take a single matrix
also accept a stack ``(..., rows, cols)`` where noted, because the Monte Carlo
code pushes hundreds of thousands of tiny matrices through them at once.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InputError, ShapeError

FIELDS = ("real", "complex")

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def check_field(field: str) -> str:
    if field not in FIELDS:
        raise InputError(f"field must be one of {FIELDS}, got {field!r}")
    return field


def dtype_of(field: str):
    return np.float64 if check_field(field) == "real" else np.complex128


def field_of(a: np.ndarray) -> str:
    return "complex" if np.iscomplexobj(a) else "real"


def adjoint(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose of the last two axes."""
    a = np.asarray(a)
    t = np.swapaxes(a, -1, -2)
    return t.conj() if np.iscomplexobj(a) else t


@dataclass(frozen=True)
class RngSeed:
    """A (seed, stream) pair naming one reproducible random stream.

    Streams with the same seed and different ids are statistically
    independent (numpy ``SeedSequence`` spawn keys).
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= _MASK64:
                raise InputError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))

    def spawn(self, k: int) -> "RngSeed":
        """Deterministic child stream number ``k``."""
        mixed = (int(self.stream) * _GOLDEN + int(k) + 1) & _MASK64
        return RngSeed(self.seed, mixed)


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, RngSeed):
        return seed.generator()
    return RngSeed(int(seed)).generator()


class SvdResult(NamedTuple):
    left: np.ndarray       # d x d unitary
    singulars: np.ndarray  # nonincreasing, length d
    right: np.ndarray      # r x d, orthonormal columns


def _validate_wide(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if not (np.issubdtype(a.dtype, np.floating) or np.issubdtype(a.dtype, np.complexfloating)):
        a = a.astype(np.float64)
    if a.ndim < 2 or a.shape[-1] < 1 or a.shape[-2] < 1:
        raise ShapeError(f"expected a matrix, got shape {a.shape}")
    if a.shape[-1] < a.shape[-2]:
        raise ShapeError(f"need cols >= rows, got {a.shape[-2]}x{a.shape[-1]}")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix has non-finite entries")
    return a


def svd_thin(a: np.ndarray) -> SvdResult:
    """Thin SVD ``a = U diag(s) V*`` of a d x r matrix with r >= d."""
    a = _validate_wide(a)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    return SvdResult(u, s, adjoint(vh))


def singular_values(a: np.ndarray) -> np.ndarray:
    """Singular values, nonincreasing, for a matrix or a stack of matrices."""
    return np.linalg.svd(np.asarray(a), compute_uv=False)


def polar(a: np.ndarray, return_flag: bool = False):
    """Nearest matrix with orthonormal rows: ``U [I 0] V*`` from the SVD.

    Works on a single d x r matrix or a stack. With ``return_flag`` also
    returns a boolean (array) marking inputs whose smallest singular value is
    below ``1e-12`` times the largest; the returned point is still feasible
    there but is not the unique minimizer.
    """
    a = _validate_wide(a)
    d = a.shape[-2]
    if d == 1:
        norms = np.linalg.norm(a, axis=-1, keepdims=True)
        flag = norms[..., 0, 0] == 0
        with np.errstate(invalid="ignore", divide="ignore"):
            p = a / norms
        if np.any(flag):
            e1 = np.zeros(a.shape[-1], dtype=a.dtype)
            e1[0] = 1
            p[flag] = e1
    else:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
        p = u @ vh
        flag = s[..., -1] < 1e-12 * s[..., 0]
        flag = flag | (s[..., 0] == 0)
    if return_flag:
        return p, (bool(flag) if np.ndim(flag) == 0 else flag)
    return p


def gaussian_matrix(rows: int, cols: int, variance: float, field: str, seed, batch=()) -> np.ndarray:
    """I.i.d. Gaussian entries with total variance ``variance``.

    Complex entries are circularly symmetric: real and imaginary parts are
    independent N(0, variance/2). ``batch`` prepends leading dimensions.
    """
    if not variance > 0:
        raise InputError("variance must be positive")
    if rows < 1 or cols < 1:
        raise ShapeError("rows and cols must be positive")
    check_field(field)
    rng = as_rng(seed)
    lead = (int(batch),) if isinstance(batch, (int, np.integer)) else tuple(int(b) for b in batch)
    shape = lead + (rows, cols)
    if field == "real":
        return rng.standard_normal(shape) * np.sqrt(variance)
    scale = np.sqrt(variance / 2)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * scale


def haar_unitary(d: int, field: str, seed) -> np.ndarray:
    """Haar-distributed element of O(d) or U(d) (QR with phase correction)."""
    g = gaussian_matrix(d, d, 1.0, field, seed)
    q, r = np.linalg.qr(g)
    ph = np.diag(r)
    ph = np.where(ph == 0, 1, ph / np.abs(ph))
    return q * ph[None, :]


def is_psd(a: np.ndarray, tol: float = 1e-9) -> tuple[bool, float]:
    """``(lambda_min >= -tol, lambda_min)`` for a Hermitian matrix."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - adjoint(a)), initial=0.0) > 1e-10 * scale:
        raise InputError("matrix is not Hermitian")
    lam_min = float(np.linalg.eigvalsh((a + adjoint(a)) / 2)[0])
    return lam_min >= -tol, lam_min


def stiefel_residual(blocks: np.ndarray) -> float:
    """max_i ||X_i X_i* - I||_max over a stack of d x m blocks."""
    blocks = np.asarray(blocks)
    d = blocks.shape[-2]
    gram = blocks @ adjoint(blocks)
    return float(np.max(np.abs(gram - np.eye(d)), initial=0.0))

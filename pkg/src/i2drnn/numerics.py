"""Shared numeric kernels: checked linear algebra, power iteration, seeded RNG.

Everything runs in 64-bit floats. The power iteration and spectral rescaling
are deterministic (fixed start vectors), so repeated calls on the same matrix
give bit-identical results.
"""

from __future__ import annotations

import hashlib
import warnings

import numpy as np

POWER_ITERATION_TOL = 1e-10
POWER_ITERATION_MAX_ITER = 10_000
SPECTRAL_SCALE_TOL = 1e-6


class ConvergenceError(RuntimeError):
    """Iterative routine failed to converge; carries the iteration count."""

    def __init__(self, message: str, iterations: int):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


def as_matrix(m) -> np.ndarray:
    """Coerce to a 2-d float64 array."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    return a


def as_vector(v) -> np.ndarray:
    """Coerce to a 1-d float64 array."""
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {a.shape}")
    return a


def matvec(m, v) -> np.ndarray:
    """Matrix-vector product with an explicit dimension check."""
    a = as_matrix(m)
    x = as_vector(v)
    if a.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {a.shape} times vector {x.shape}")
    return a @ x


def tanh_vec(v) -> np.ndarray:
    """Elementwise tanh."""
    return np.tanh(as_vector(v))


def tanh_deriv(v) -> np.ndarray:
    """Elementwise tanh derivative, 1 - tanh(v)^2, evaluated at v."""
    t = np.tanh(as_vector(v))
    return 1.0 - t * t


def _power_start(n: int, attempt: int) -> np.ndarray:
    # Deterministic start vectors; the ramp breaks ties between symmetric
    # directions, the second attempt alternates signs in case the first lies
    # in the null space.
    base = 1.0 + np.arange(n, dtype=np.float64) / (n + 1.0)
    if attempt == 1:
        base = base * np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return base / np.linalg.norm(base)


def largest_eigenvalue(m, tol: float = POWER_ITERATION_TOL,
                       max_iter: int = POWER_ITERATION_MAX_ITER) -> float:
    """Largest eigenvalue of a symmetric matrix by power iteration.

    Uses the Rayleigh quotient with relative convergence `tol`. Raises
    ConvergenceError (with the iteration count) if `max_iter` is exceeded.
    """
    a = as_matrix(m)
    n, k = a.shape
    if n != k:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-9 * max(1.0, float(np.abs(a).max()))):
        raise ValueError("matrix must be symmetric")
    if n == 1:
        return float(a[0, 0])
    if not np.any(a):
        return 0.0

    for attempt in range(2):
        v = _power_start(n, attempt)
        lam = float(v @ (a @ v))
        for it in range(1, max_iter + 1):
            w = a @ v
            norm = np.linalg.norm(w)
            if norm == 0.0:
                break  # start vector sits in the null space; retry
            v = w / norm
            new = float(v @ (a @ v))
            if abs(new - lam) <= tol * max(1.0, abs(new)):
                return new
            lam = new
        else:
            raise ConvergenceError("power iteration did not converge", max_iter)
    # Both deterministic starts collapsed into the null space: for a symmetric
    # matrix that means the nonzero spectrum was never reached.
    raise ConvergenceError("power iteration start vectors lie in the null space", 0)


def spectral_norm(m) -> float:
    """Largest singular value, computed as sqrt(largest eig of m^T m)."""
    a = as_matrix(m)
    return float(np.sqrt(max(largest_eigenvalue(a.T @ a), 0.0)))


def spectral_radius_scale(m, target: float) -> np.ndarray:
    """Rescale m so its largest singular value equals `target`.

    target must lie in (0, 1]. A zero matrix cannot be rescaled; it is
    returned unchanged with a warning.
    """
    if not (0.0 < target <= 1.0):
        raise ValueError(f"target must be in (0, 1], got {target}")
    a = as_matrix(m)
    s = spectral_norm(a)
    if s == 0.0:
        warnings.warn("spectral_radius_scale: zero matrix left unchanged", RuntimeWarning)
        return a.copy()
    scaled = a * (target / s)
    # the rescaled norm must land on the target within tolerance
    check = spectral_norm(scaled)
    if abs(check - target) > SPECTRAL_SCALE_TOL:
        raise ConvergenceError(
            f"spectral rescale landed at {check}, wanted {target}", 0)
    return scaled


def _derive_key(seed: int, path: tuple[str, ...]) -> int:
    text = repr(int(seed)) + "\x1f" + "\x1f".join(path)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


class Rng:
    """Counter-based random stream, splittable into independent substreams.

    Substreams are addressed by string labels: `rng.split("init")` yields a
    stream fully determined by (seed, "init"), independent of draw order on
    the parent or sibling streams. Identical seed and label path always
    reproduce the identical stream.
    """

    def __init__(self, seed: int, _path: tuple[str, ...] = ()):
        self.seed = int(seed)
        self.path = _path
        self._gen = np.random.Generator(np.random.Philox(key=_derive_key(seed, _path)))

    def split(self, label: str) -> "Rng":
        """Independent child stream addressed by `label`."""
        return Rng(self.seed, self.path + (str(label),))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def integers(self, low: int, high: int, size=None):
        """Integers drawn from [low, high] inclusive."""
        return self._gen.integers(low, high, size, endpoint=True)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={'/'.join(self.path) or '<root>'})"

"""Dense linear-algebra and solver kernel.

Everything downstream (layer training, backward target propagation, the
fused classifier) is built from the handful of primitives in this module:
SVD-based pseudoinverse with rank truncation, the closed-form ridge
solution, a FISTA solver for the L1-regularized least-squares problem,
power iteration for the step-size constant, and invertible elementwise
activations.

All functions are pure: inputs are validated, never mutated, and results
are deterministic for identical inputs.
"""

import enum
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateInputError,
    DimensionError,
    IllConditionedWarning,
    NumericalError,
)

# Values fed to an inverse activation are clamped this far inside the
# activation's open range so the inverse is total.
INVERSE_CLIP_EPS = 1e-7

_EPS = float(np.finfo(np.float64).eps)


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Validate and return a 2-D float64 matrix with finite entries."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got {m.ndim} dimension(s)")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"{name} must be nonempty, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise NumericalError(f"{name} contains NaN or Inf entries")
    return m


class SvdResult(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


def svd(m) -> SvdResult:
    """Thin SVD of `m` with nonincreasing singular values.

    Raises NumericalError naming the offending shape if the underlying
    iteration does not converge.
    """
    m = as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD failed to converge for {m.shape[0]}x{m.shape[1]} matrix"
        ) from exc
    return SvdResult(u, s, vt)


def pinv(m, rcond: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD with rank truncation.

    Singular values <= `rcond` are treated as zero. When `rcond` is None
    it defaults to ``max(rows, cols) * machine_eps * largest_singular_value``.
    """
    m = as_matrix(m)
    u, s, vt = svd(m)
    if rcond is None:
        rcond = max(m.shape) * _EPS * (float(s[0]) if s.size else 0.0)
    keep = s > rcond
    if not keep.any():
        return np.zeros((m.shape[1], m.shape[0]))
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def ridge_solve(h, x, lam: float) -> np.ndarray:
    """Closed-form ridge solution W = X H^T (H H^T + lam I)^-1.

    Minimizes 0.5*||W H - X||_F^2 + (lam/2)*||W||_F^2 over W, where H is
    p x N and X is d x N (one sample per column); the result is d x p.
    With lam == 0 the normal equations are solved directly when H H^T is
    numerically invertible; otherwise a pseudoinverse fallback is used and
    an IllConditionedWarning is emitted.
    """
    h = as_matrix(h, "h")
    x = as_matrix(x, "x")
    if h.shape[1] != x.shape[1]:
        raise DimensionError(
            f"sample-count mismatch: h has {h.shape[1]} columns, x has {x.shape[1]}"
        )
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    gram = h @ h.T
    rhs = x @ h.T
    # solve(...).T is F-ordered; weights must leave in C order because BLAS
    # low bits depend on operand layout, and a reloaded model (always C)
    # must reproduce the trained one bit for bit.
    if lam > 0:
        gram = gram + lam * np.eye(h.shape[0])
        try:
            return np.ascontiguousarray(np.linalg.solve(gram, rhs.T).T)
        except np.linalg.LinAlgError:  # pragma: no cover - lam > 0 keeps gram PD
            pass
    else:
        evals = np.linalg.eigvalsh(gram)
        tol = max(h.shape) * _EPS * max(float(evals[-1]), 0.0)
        if evals[0] > tol and evals[-1] > 0:
            return np.ascontiguousarray(np.linalg.solve(gram, rhs.T).T)
    warnings.warn(
        f"near-singular {gram.shape[0]}x{gram.shape[0]} system "
        "(lam == 0); solving via pseudoinverse",
        IllConditionedWarning,
        stacklevel=2,
    )
    return rhs @ pinv(gram)


def max_eigenvalue(m, rel_tol: float = 1e-10, max_iter: int = 1000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Starts from the normalized all-ones vector so the result is
    deterministic. If that vector is annihilated by `m`, standard basis
    vectors are tried in index order before concluding the matrix is zero.
    """
    m = as_matrix(m)
    n = m.shape[0]
    if n != m.shape[1]:
        raise DimensionError(f"matrix must be square, got shape {m.shape}")
    v = np.full(n, 1.0 / np.sqrt(n))
    restarts = iter(range(n))
    lam = 0.0
    prev = None
    for _ in range(max_iter):
        w = m @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            for k in restarts:
                if m[:, k].any():
                    v = np.zeros(n)
                    v[k] = 1.0
                    break
            else:
                return 0.0
            prev = None
            continue
        lam = float(v @ w)
        v = w / norm
        if prev is not None and abs(lam - prev) <= rel_tol * max(1.0, abs(lam)):
            break
        prev = lam
    return lam


@dataclass(frozen=True)
class FistaConfig:
    """L1 weight and iteration budget for `fista_lasso`."""

    alpha: float
    max_iter: int = 200
    rel_tol: float = 1e-6

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.rel_tol <= 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")


def soft_threshold(m: np.ndarray, t: float) -> np.ndarray:
    """Elementwise soft-thresholding, the proximal operator of t*||.||_1."""
    return np.sign(m) * np.maximum(np.abs(m) - t, 0.0)


def next_momentum(t: float) -> float:
    """Momentum update t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2."""
    return (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0


def fista_lasso(h, x, cfg: FistaConfig) -> np.ndarray:
    """Approximately minimize 0.5*||W H - X||_F^2 + alpha*||W||_1.

    Accelerated proximal gradient iteration: the smooth-part gradient at V
    is (V H - X) H^T, the step size is 1/L with L the largest eigenvalue
    of H H^T, and each step soft-thresholds at alpha/L. Iteration starts
    from the ridge solution with the same weight and stops when the
    relative objective change drops below cfg.rel_tol or the budget runs
    out. The best iterate seen (by objective) is returned, so the result
    is never worse than the warm start.
    """
    h = as_matrix(h, "h")
    x = as_matrix(x, "x")
    if h.shape[1] != x.shape[1]:
        raise DimensionError(
            f"sample-count mismatch: h has {h.shape[1]} columns, x has {x.shape[1]}"
        )
    lipschitz = max_eigenvalue(h @ h.T)
    if lipschitz <= 0.0:
        raise DegenerateInputError("h is all zeros; the LASSO problem is degenerate")

    ht = h.T

    def objective(w):
        resid = w @ h - x
        return 0.5 * float(np.sum(resid * resid)) + cfg.alpha * float(
            np.sum(np.abs(w))
        )

    w_prev = ridge_solve(h, x, cfg.alpha)
    v = w_prev
    t = 1.0
    best_w = w_prev
    best_obj = objective(w_prev)
    prev_obj = best_obj
    for _ in range(cfg.max_iter):
        grad = (v @ h - x) @ ht
        w = soft_threshold(v - grad / lipschitz, cfg.alpha / lipschitz)
        t_next = next_momentum(t)
        v = w + ((t - 1.0) / t_next) * (w - w_prev)
        w_prev, t = w, t_next
        obj = objective(w)
        if obj < best_obj:
            best_w, best_obj = w, obj
        if abs(prev_obj - obj) <= cfg.rel_tol * max(1.0, abs(prev_obj)):
            break
        prev_obj = obj
    return np.ascontiguousarray(best_w)


class Activation(enum.Enum):
    """Elementwise activation with a defined inverse on a clipped range."""

    TANH = "tanh"
    SIGMOID = "sigmoid"
    IDENTITY = "identity"

    @classmethod
    def from_name(cls, name: str) -> "Activation":
        try:
            return cls(name.lower())
        except ValueError:
            valid = ", ".join(a.value for a in cls)
            raise ValueError(f"unknown activation {name!r}; expected one of {valid}")


def activate(act: Activation, m) -> np.ndarray:
    """Apply the activation elementwise."""
    m = as_matrix(m)
    if act is Activation.TANH:
        return np.tanh(m)
    if act is Activation.SIGMOID:
        return 1.0 / (1.0 + np.exp(-np.clip(m, -500.0, 500.0)))
    return m.copy()


def activate_inverse(act: Activation, m, eps: float = INVERSE_CLIP_EPS) -> np.ndarray:
    """Apply the activation's inverse elementwise.

    Arguments are clamped into the activation's open range shrunk by `eps`
    (tanh: [-1+eps, 1-eps]; sigmoid: [eps, 1-eps]) first, which makes the
    inverse total for any finite input.
    """
    m = as_matrix(m)
    if act is Activation.TANH:
        return np.arctanh(np.clip(m, -1.0 + eps, 1.0 - eps))
    if act is Activation.SIGMOID:
        p = np.clip(m, eps, 1.0 - eps)
        return np.log(p / (1.0 - p))
    return m.copy()


def random_orthonormal_rows(
    n_rows: int, n_cols: int, rng: np.random.Generator
) -> np.ndarray:
    """Seeded Gaussian matrix with orthonormalized rows.

    When n_rows > n_cols (more rows than the space allows), rows are
    orthonormalized in consecutive blocks of n_cols.
    """
    if n_rows < 1 or n_cols < 1:
        raise DimensionError(f"invalid shape ({n_rows}, {n_cols})")
    blocks = []
    remaining = n_rows
    while remaining > 0:
        b = min(remaining, n_cols)
        g = rng.standard_normal((n_cols, b))
        q, _ = np.linalg.qr(g)
        blocks.append(q.T)
        remaining -= b
    # C order for the same reason as ridge_solve: reloaded copies are C.
    return np.ascontiguousarray(np.vstack(blocks))

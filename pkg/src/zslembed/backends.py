"""Hot numerical kernels with a compiled core and a NumPy fallback.

Two operations dominate runtime at scale: Gaussian kernel matrices
(importance weighting) and per-output ADMM lasso sweeps (sparse
combination fits).  Both exist in two implementations:

* ``zslembed._core`` -- Cython extension, built at install time;
* pure NumPy fallbacks in this module.

The backend is selected at import: the compiled core when available,
else NumPy.  Override with the ``ZSLEMBED_BACKEND`` environment
variable (``compiled`` or ``python``) or :func:`set_backend`.  Both
backends implement the same contracts and agree to solver tolerance;
``benchmarks/bench_backends.py`` compares their speed.
"""

import os

import numpy as np
from scipy.linalg import cho_solve

try:
    from . import _core
except ImportError:
    _core = None

VALID_BACKENDS = ("compiled", "python")


def _py_gaussian_kernel(points, centers, sigma):
    # (j, i) = exp(-||p_i - c_j||^2 / (2 sigma^2)); clamp the expanded
    # square which can go slightly negative from cancellation
    sq = (
        np.sum(centers * centers, axis=0)[:, None]
        + np.sum(points * points, axis=0)[None, :]
        - 2.0 * centers.T @ points
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * sigma * sigma))


def _py_lasso_admm_core(chol_lower, rhs, lam, rho, max_iters, abs_tol, rel_tol):
    dim, k = rhs.shape
    factor = (chol_lower, True)
    out = np.empty((dim, k))
    iters = np.empty(k, dtype=np.int64)
    root_dim = np.sqrt(dim)
    for j in range(k):
        q = rhs[:, j]
        v = np.zeros(dim)
        w = np.zeros(dim)
        n_iter = max_iters
        for it in range(max_iters):
            u = cho_solve(factor, q + rho * (v - w))
            v_old = v
            uw = u + w
            v = np.sign(uw) * np.maximum(np.abs(uw) - lam / rho, 0.0)
            w = uw - v
            r_norm = np.linalg.norm(u - v)
            s_norm = rho * np.linalg.norm(v - v_old)
            eps_pri = root_dim * abs_tol + rel_tol * max(
                np.linalg.norm(u), np.linalg.norm(v)
            )
            eps_dual = root_dim * abs_tol + rel_tol * rho * np.linalg.norm(w)
            if r_norm <= eps_pri and s_norm <= eps_dual:
                n_iter = it + 1
                break
        out[:, j] = v
        iters[j] = n_iter
    return out, iters


_IMPLS = {
    "python": {
        "gaussian_kernel": _py_gaussian_kernel,
        "lasso_admm_core": _py_lasso_admm_core,
    }
}
if _core is not None:
    _IMPLS["compiled"] = {
        "gaussian_kernel": _core.gaussian_kernel,
        "lasso_admm_core": _core.lasso_admm_core,
    }

_backend = os.environ.get(
    "ZSLEMBED_BACKEND", "compiled" if _core is not None else "python"
)


def have_compiled():
    return _core is not None


def get_backend():
    return _backend


def set_backend(name):
    """Select the kernel implementation; returns the previous name."""
    global _backend
    if name not in VALID_BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {VALID_BACKENDS}")
    if name not in _IMPLS:
        raise RuntimeError("compiled backend requested but the extension is not built")
    previous = _backend
    _backend = name
    return previous


if _backend not in _IMPLS:
    raise RuntimeError(
        f"ZSLEMBED_BACKEND={_backend!r} unavailable; "
        "the compiled extension is not built"
    )


def gaussian_kernel(points, centers, sigma):
    """Kernel matrix K[j, i] = exp(-||points[:,i] - centers[:,j]||^2 / 2 sigma^2)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    points = np.ascontiguousarray(points, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    if points.shape[0] != centers.shape[0]:
        raise ValueError(
            f"dimension mismatch: points {points.shape[0]}-d, "
            f"centers {centers.shape[0]}-d"
        )
    return _IMPLS[_backend]["gaussian_kernel"](points, centers, float(sigma))


def lasso_admm(design, targets, lam, rho=1.0, max_iters=2000, abs_tol=1e-8, rel_tol=1e-6):
    """Solve min_u (1/n)||design @ u - t||^2 + lam*||u||_1 per target column.

    ``design`` is n x T, ``targets`` n x k; returns (T x k coefficients,
    per-column iteration counts).  The quadratic term's Cholesky factor
    is shared across columns; each column then runs an independent
    ADMM iteration (split variable + scaled dual, fixed rho).
    """
    design = np.ascontiguousarray(design, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    n, dim = design.shape
    if targets.shape[0] != n:
        raise ValueError("design and targets row counts differ")
    scale = 2.0 / n
    gram = scale * design.T @ design + rho * np.eye(dim)
    chol_lower = np.linalg.cholesky(gram)
    rhs = scale * design.T @ targets
    coef, iters = _IMPLS[_backend]["lasso_admm_core"](
        np.ascontiguousarray(chol_lower),
        np.ascontiguousarray(rhs),
        float(lam),
        float(rho),
        int(max_iters),
        float(abs_tol),
        float(rel_tol),
    )
    return np.asarray(coef), np.asarray(iters)

"""Importance weighting of training instances by density-ratio estimation.

Learns nonnegative per-instance weights that make the weighted training
distribution match the test distribution, by maximising the mean test
log-weight subject to the weights averaging one over the training set.
The weight function is a nonnegative combination of Gaussian kernels
centred at test points:

* ``visual``   -- kernels over test features only;
* ``category`` -- kernels over candidate test-class embeddings only;
* ``full``     -- the sum of both terms, w(x, z) = w_x(x) + w_z(z).

The test-class side has no instance-label association (that assignment
is what zero-shot prediction produces), so the candidate class
embeddings enter uniformly, one column each.

The program is convex; the solver is a multiplicative fixed-point
ascent (the expectation-maximisation update of the equivalent
mixture-proportion likelihood), which keeps the coefficients
nonnegative, satisfies the mean-one constraint exactly at every
iterate, and never decreases the objective.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .backends import gaussian_kernel
from .errors import DataError
from .matrix_io import as_matrix, load_matrix, save_matrix

gaussian_kernel_matrix = gaussian_kernel


@dataclass(frozen=True)
class KliepModel:
    """Fitted kernel mixture: centers, coefficients and bandwidths.

    ``a`` weights the feature-space kernels (centers_x), ``b`` the
    embedding-space kernels (centers_z); unused sides are empty for
    single-space variants.
    """

    variant: str
    centers_x: np.ndarray
    centers_z: np.ndarray
    a: np.ndarray
    b: np.ndarray
    sigma_x: float
    sigma_z: float
    converged: bool = True
    objective_trace: tuple = ()

    def __post_init__(self):
        if self.variant not in ("visual", "category", "full"):
            raise DataError(f"unknown KLIEP variant {self.variant!r}")
        if (np.asarray(self.a) < 0).any() or (np.asarray(self.b) < 0).any():
            raise DataError("kernel coefficients must be nonnegative")

    def weigh_features(self, x):
        """Feature-space component w_x(x) of the weight function."""
        if not self.a.size:
            raise DataError("this model has no feature-space component")
        return gaussian_kernel(x, self.centers_x, self.sigma_x).T @ self.a

    def weigh_embeddings(self, z):
        """Embedding-space component w_z(z) of the weight function."""
        if not self.b.size:
            raise DataError("this model has no embedding-space component")
        return gaussian_kernel(z, self.centers_z, self.sigma_z).T @ self.b

    def weigh(self, x=None, z=None):
        """Evaluate w(x, z), the sum of the model's active components."""
        total = None
        if self.a.size:
            if x is None:
                raise DataError("this model needs feature inputs")
            total = self.weigh_features(x)
        if self.b.size:
            if z is None:
                raise DataError("this model needs embedding inputs")
            wz = self.weigh_embeddings(z)
            total = wz if total is None else total + wz
        return total


@dataclass(frozen=True)
class ImportanceWeights:
    """Nonnegative per-instance weights averaging one."""

    omega: np.ndarray

    def __post_init__(self):
        omega = np.array(self.omega, dtype=np.float64).ravel()
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        if omega.size == 0:
            raise DataError("empty weight vector")
        if (omega < 0).any():
            raise DataError("negative importance weight")
        if abs(omega.mean() - 1.0) > 1e-6:
            raise DataError(
                f"importance weights must average 1, got {omega.mean():.8f}"
            )


def apply_weights(weights, X, Z):
    """Scale instance columns of X and Z by sqrt(w_i).

    Quadratic losses on the scaled data equal the w-weighted losses on
    the originals.
    """
    omega = weights.omega if isinstance(weights, ImportanceWeights) else np.asarray(
        weights, dtype=np.float64
    ).ravel()
    if (omega < 0).any():
        raise DataError("negative importance weight")
    X = as_matrix(X, "X")
    Z = as_matrix(Z, "Z")
    if X.shape[1] != omega.size or Z.shape[1] != omega.size:
        raise DataError("weight vector length does not match instance count")
    root = np.sqrt(omega)
    return X * root, Z * root


def save_weights(weights, path, format=None):
    """Export weights as a one-column matrix (binary or CSV)."""
    omega = weights.omega if isinstance(weights, ImportanceWeights) else np.asarray(
        weights, dtype=np.float64
    ).ravel()
    return save_matrix(omega[:, None], path, format=format)


def load_weights(path, format=None):
    matrix = load_matrix(path, format=format)
    if matrix.shape[1] != 1:
        raise DataError(f"{path}: expected one column, got {matrix.shape[1]}")
    return ImportanceWeights(omega=matrix.ravel())


def log_objective_and_grad(coef, kernel_at_samples):
    """Mean log kernel-mixture value over samples, and its gradient.

    ``kernel_at_samples`` is m x n (centers by samples); the objective
    term is mean_i log(coef . K[:, i]) and the gradient is
    mean_i K[:, i] / (coef . K[:, i]).
    """
    mix = kernel_at_samples.T @ coef
    with np.errstate(divide="ignore"):
        value = float(np.mean(np.log(mix)))
    if np.isfinite(value):
        grad = kernel_at_samples @ (1.0 / mix) / mix.size
    else:
        grad = np.full(coef.shape, np.nan)
    return value, grad


def median_sigma(points, centers):
    """Median Euclidean distance between point and center columns."""
    sq = (
        np.sum(points * points, axis=0)[:, None]
        + np.sum(centers * centers, axis=0)[None, :]
        - 2.0 * points.T @ centers
    )
    dists = np.sqrt(np.maximum(sq, 0.0))
    med = float(np.median(dists))
    if med <= 0:
        med = float(dists.mean())
    if med <= 0:
        raise DataError(
            "all pairwise distances are zero; pass a fixed sigma"
        )
    return med


def _subsample_columns(matrix, cap, rng):
    if matrix.shape[1] <= cap:
        return matrix
    idx = np.sort(rng.choice(matrix.shape[1], size=cap, replace=False))
    return matrix[:, idx]


def _resolve_sigma(policy, train_pts, centers, samples, max_iters):
    if isinstance(policy, (int, float)):
        if policy <= 0:
            raise DataError("sigma must be positive")
        return float(policy)
    if policy == "median":
        return median_sigma(train_pts, centers)
    if policy == "lcv":
        return _lcv_sigma(train_pts, centers, samples, max_iters)
    raise DataError(f"unknown sigma policy {policy!r}")


def _lcv_sigma(train_pts, centers, samples, max_iters, n_folds=5):
    """Likelihood cross-validation over a grid around the median."""
    base = median_sigma(train_pts, centers)
    grid = [base * f for f in (0.25, 0.5, 1.0, 2.0, 4.0)]
    n = samples.shape[1]
    n_folds = min(n_folds, n)
    folds = np.array_split(np.arange(n), n_folds)
    fit_iters = min(max_iters, 1000)  # selection needs scores, not full precision
    best = (-np.inf, base)
    for sigma in grid:
        K_tr = gaussian_kernel(train_pts, centers, sigma)
        scores = []
        for fold in folds:
            held = samples[:, fold]
            rest = np.delete(samples, fold, axis=1)
            if rest.shape[1] == 0:
                continue
            K_fit = gaussian_kernel(rest, centers, sigma)
            coef, _, _ = _ascend([K_fit], [K_tr.mean(axis=1)], max_iters=fit_iters)
            K_held = gaussian_kernel(held, centers, sigma)
            score, _ = log_objective_and_grad(coef[0], K_held)
            scores.append(score)
        mean_score = float(np.mean(scores)) if scores else -np.inf
        if mean_score > best[0]:
            best = (mean_score, sigma)
    return best[1]


def _ascend(kernels_te, constraint_means, max_iters=5000, tol=1e-7):
    """Multiplicative fixed-point ascent on the summed log objectives.

    Substituting the mean-one constraint turns the program into
    maximum-likelihood estimation of mixture proportions, whose
    expectation-maximisation update is

        coef_j <- share * coef_j * grad_j / constraint_mean_j

    (one coefficient block per active space, each block holding an
    equal ``share`` of the constraint mass at the optimum).  The update
    keeps coefficients nonnegative, lands exactly on the constraint,
    and never decreases the objective.
    """
    coefs = []
    for K, p in zip(kernels_te, constraint_means):
        if not (p > 0).any():
            raise DataError(
                "degenerate kernels: no kernel mass over the training set; "
                "increase sigma (median policy is the default)"
            )
        if (p == 0).any():
            warnings.warn(
                "kernel centers with no support over the training set "
                "were dropped",
                stacklevel=3,
            )
        coefs.append(np.where(p > 0, 1.0, 0.0))
    norm = sum(c @ p for c, p in zip(coefs, constraint_means))
    coefs = [c / norm for c in coefs]

    def objective(cs):
        return sum(log_objective_and_grad(c, K)[0] for c, K in zip(cs, kernels_te))

    current = objective(coefs)
    if not np.isfinite(current):
        raise DataError(
            "degenerate kernels: a test sample has no kernel support; "
            "increase sigma (median policy is the default)"
        )
    trace = [current]
    share = 1.0 / len(kernels_te)
    safe_means = [np.where(p > 0, p, 1.0) for p in constraint_means]
    converged = False
    for _ in range(max_iters):
        coefs = [
            share * c * log_objective_and_grad(c, K)[1] / p
            for c, K, p in zip(coefs, kernels_te, safe_means)
        ]
        value = objective(coefs)
        gain = value - current
        current = value
        trace.append(current)
        if gain <= tol * max(1.0, abs(current)):
            converged = True
            break
    return coefs, trace, converged


def kliep_fit(
    x_train,
    z_train,
    x_test,
    z_test,
    variant="full",
    sigma_policy="median",
    max_centers=1000,
    seed=0,
    max_iters=5000,
    tol=1e-7,
):
    """Estimate importance weights for the training instances.

    ``x_train``/``x_test`` are feature matrices (d_x by instances);
    ``z_train`` holds per-training-instance class embeddings and
    ``z_test`` the candidate test-class embeddings (one column per
    candidate), required for the category and full variants.  Kernel
    centers default to all test columns, uniformly subsampled above
    ``max_centers``.  ``sigma_policy`` is ``"median"``, ``"lcv"`` or a
    fixed positive bandwidth, resolved per space.

    Returns the fitted model and weights with mean exactly one.
    """
    rng = np.random.default_rng(seed)
    use_x = variant in ("visual", "full")
    use_z = variant in ("category", "full")
    if not (use_x or use_z):
        raise DataError(f"unknown KLIEP variant {variant!r}")

    kernels_te, constraint_means, train_kernels = [], [], []
    centers_x = np.empty((0, 0))
    centers_z = np.empty((0, 0))
    sigma_x = sigma_z = 0.0
    n_train = None

    if use_x:
        x_train = as_matrix(x_train, "x_train")
        x_test = as_matrix(x_test, "x_test")
        if x_test.shape[1] == 0:
            raise DataError("empty test set")
        n_train = x_train.shape[1]
        centers_x = _subsample_columns(x_test, max_centers, rng)
        sigma_x = _resolve_sigma(sigma_policy, x_train, centers_x, x_test, max_iters)
        kernels_te.append(gaussian_kernel(x_test, centers_x, sigma_x))
        K_tr = gaussian_kernel(x_train, centers_x, sigma_x)
        train_kernels.append(K_tr)
        constraint_means.append(K_tr.mean(axis=1))
    if use_z:
        if z_train is None or z_test is None:
            raise DataError(
                f"variant {variant!r} needs training-instance and "
                "test-class embeddings"
            )
        z_train = as_matrix(z_train, "z_train")
        z_test = as_matrix(z_test, "z_test")
        if z_test.shape[1] == 0:
            raise DataError("empty test-class embedding set")
        if n_train is None:
            n_train = z_train.shape[1]
        elif z_train.shape[1] != n_train:
            raise DataError("x_train and z_train instance counts differ")
        centers_z = _subsample_columns(z_test, max_centers, rng)
        sigma_z = _resolve_sigma(sigma_policy, z_train, centers_z, z_test, max_iters)
        kernels_te.append(gaussian_kernel(z_test, centers_z, sigma_z))
        K_tr = gaussian_kernel(z_train, centers_z, sigma_z)
        train_kernels.append(K_tr)
        constraint_means.append(K_tr.mean(axis=1))

    coefs, trace, converged = _ascend(
        kernels_te, constraint_means, max_iters=max_iters, tol=tol
    )
    if not converged:
        warnings.warn("KLIEP solver hit its iteration budget", stacklevel=2)

    omega = np.zeros(n_train)
    for coef, K_tr in zip(coefs, train_kernels):
        omega = omega + K_tr.T @ coef
    # the renormalisation enforces mean-one analytically; tidy the
    # floating-point residue so the invariant holds exactly
    omega = omega / omega.mean()

    if use_x and use_z:
        a, b = coefs
    elif use_x:
        a, b = coefs[0], np.empty(0)
    else:
        a, b = np.empty(0), coefs[0]
    model = KliepModel(
        variant=variant,
        centers_x=centers_x,
        centers_z=centers_z,
        a=a,
        b=b,
        sigma_x=sigma_x,
        sigma_z=sigma_z,
        converged=converged,
        objective_trace=tuple(trace),
    )
    return model, ImportanceWeights(omega=omega)

"""Visual-to-semantic regression fits.

Four mappings from a feature matrix X (d_x x n) to label embeddings
Z (d_z x n):

* ``ridge_fit``  -- independent per-output ridge regression (closed form);
* ``rmtl_fit``   -- shared + per-output parameter vectors, expressed as a
  fixed combination pattern over d_z + 1 latent regressors (closed form);
* ``gomtl_fit``  -- sparse combinations of T latent regressors, alternating
  ADMM lasso (rows of S) and Armijo gradient descent (A);
* ``mte_fit``    -- explicit latent codes L with per-block closed-form
  updates in the fixed order L -> S -> A.

Squared-error terms are divided by the (effective) instance count; the
regularisers are not.  Per-instance weights enter by scaling instance
columns with sqrt(w); the effective count is then the sum of weights,
which keeps integer-weighted fits identical to duplicating instances.
"""

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from .backends import lasso_admm
from .data import HyperParams
from .errors import DataError
from .matrix_io import as_matrix, load_matrix, save_matrix


@dataclass(frozen=True)
class FitReport:
    """Objective trace and termination status of an iterative fit."""

    objective_trace: tuple
    iterations: int
    converged: bool


@dataclass(frozen=True)
class StlModel:
    """Single-task linear map W (d_z x d_x) with its ridge strength."""

    W: np.ndarray
    lam: float


@dataclass(frozen=True)
class MtlModel:
    """Factorised map W = S @ A with T latent regressors.

    ``S`` is d_z x T (combination coefficients), ``A`` is T x d_x
    (latent regressors).
    """

    S: np.ndarray
    A: np.ndarray
    variant: str
    hyper: HyperParams
    report: FitReport = None

    @property
    def latent_dim(self):
        return self.S.shape[1]

    def effective_w(self):
        return self.S @ self.A


def _weighted(X, Z, weights):
    """Fold per-instance weights into X/Z columns; return effective n."""
    X = as_matrix(X, "X")
    Z = as_matrix(Z, "Z")
    if X.shape[1] != Z.shape[1]:
        raise DataError(
            f"X has {X.shape[1]} instances but Z has {Z.shape[1]}"
        )
    if X.shape[1] == 0:
        raise DataError("no training instances")
    if weights is None:
        return X, Z, float(X.shape[1])
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != X.shape[1]:
        raise DataError(
            f"{w.shape[0]} weights for {X.shape[1]} instances"
        )
    if (w < 0).any():
        raise DataError("negative instance weight")
    n_eff = float(w.sum())
    if n_eff <= 0:
        raise DataError("instance weights sum to zero")
    root = np.sqrt(w)
    return X * root, Z * root, n_eff


def ridge_objective(W, X, Z, lam, n_eff=None):
    n = X.shape[1] if n_eff is None else n_eff
    resid = Z - W @ X
    return float(np.sum(resid * resid) / n + lam * np.sum(W * W))


def ridge_fit(X, Z, lam, weights=None):
    """Closed-form ridge solve W = Z X^T (X X^T + lam*n*I)^(-1).

    Minimises (1/n)||Z - WX||_F^2 + lam*||W||_F^2.  With ``weights``,
    columns are scaled by sqrt(w_i) and n becomes sum(w).  Requires
    lam > 0 whenever X X^T is singular.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    Xw, Zw, n_eff = _weighted(X, Z, weights)
    gram = Xw @ Xw.T + lam * n_eff * np.eye(Xw.shape[0])
    try:
        factor = cho_factor(gram)
    except np.linalg.LinAlgError:
        raise DataError(
            "singular system: X X^T is rank-deficient; use a positive lam"
        ) from None
    W = cho_solve(factor, Xw @ Zw.T).T
    return StlModel(W=W, lam=float(lam))


def rmtl_pattern(d_z):
    """Fixed combination matrix [1 | I]: output d uses the shared row
    plus its own task row."""
    return np.hstack([np.ones((d_z, 1)), np.eye(d_z)])


def rmtl_objective(A, X, Z, gamma_shared, gamma_task, n_eff=None):
    n = X.shape[1] if n_eff is None else n_eff
    S = rmtl_pattern(Z.shape[0])
    resid = Z - S @ A @ X
    pen = gamma_shared * np.sum(A[0] * A[0]) + gamma_task * np.sum(A[1:] * A[1:])
    return float(np.sum(resid * resid) / n + pen)


def rmtl_fit(X, Z, hyper, weights=None):
    """Shared-plus-specific multi-task fit with the fixed [1 | I] pattern.

    Solves the stationarity equation S^T S A X X^T + n*G A = S^T Z X^T
    exactly (G = diag of per-row penalties) through a two-sided
    eigendecomposition.  ``hyper.lambda_a`` sets both penalties unless
    ``gamma_shared``/``gamma_task`` override them.
    """
    Xw, Zw, n_eff = _weighted(X, Z, weights)
    d_z = Zw.shape[0]
    g_shared = hyper.lambda_a if hyper.gamma_shared is None else hyper.gamma_shared
    g_task = hyper.lambda_a if hyper.gamma_task is None else hyper.gamma_task
    if g_shared <= 0 or g_task <= 0:
        raise DataError(
            "the shared/specific decomposition is not identifiable "
            "without positive penalties; set lambda_a > 0"
        )
    S = rmtl_pattern(d_z)
    gammas = np.concatenate([[g_shared], np.full(d_z, g_task)])
    inv_root = 1.0 / np.sqrt(gammas)
    # P A Q + n G A = M  ->  diagonalise G^-1/2 P G^-1/2 and Q
    P = S.T @ S
    Q = Xw @ Xw.T
    M = S.T @ Zw @ Xw.T
    p_vals, p_vecs = eigh(inv_root[:, None] * P * inv_root[None, :])
    q_vals, q_vecs = eigh(Q)
    C = p_vecs.T @ (inv_root[:, None] * M) @ q_vecs
    B = C / (np.outer(p_vals, q_vals) + n_eff)
    A = inv_root[:, None] * (p_vecs @ B @ q_vecs.T)
    obj0 = rmtl_objective(np.zeros_like(A), Xw, Zw, g_shared, g_task, n_eff)
    obj = rmtl_objective(A, Xw, Zw, g_shared, g_task, n_eff)
    report = FitReport(objective_trace=(obj0, obj), iterations=1, converged=True)
    return MtlModel(S=S, A=A, variant="rmtl", hyper=hyper, report=report)


def gomtl_objective(S, A, X, Z, lambda_s, gamma, n_eff=None):
    n = X.shape[1] if n_eff is None else n_eff
    resid = Z - S @ A @ X
    return float(
        np.sum(resid * resid) / n
        + lambda_s * np.sum(np.abs(S))
        + gamma * np.sum(A * A)
    )


def _svd_warm_start(X, Z, hyper):
    """Balanced rank-T split of the ridge solution into S0 @ A0."""
    d_z, d_x = Z.shape[0], X.shape[0]
    T = hyper.latent_t
    if T > d_z:
        warnings.warn(
            f"latent dimension {T} exceeds output dimension {d_z}: "
            "over-complete basis",
            stacklevel=3,
        )
    ridge = ridge_fit(X, Z, max(hyper.lambda_ridge, 1e-8))
    U, svals, Vt = np.linalg.svd(ridge.W, full_matrices=False)
    k = min(T, svals.size)
    root = np.sqrt(svals[:k])
    S0 = np.zeros((d_z, T))
    A0 = np.zeros((T, d_x))
    S0[:, :k] = U[:, :k] * root
    A0[:k, :] = root[:, None] * Vt[:k, :]
    return S0, A0


def gomtl_fit(X, Z, hyper, weights=None, init=None):
    """Sparse-combination multi-task fit, alternating S and A.

    With A fixed, each row of S is an L1-penalised least-squares
    problem solved by ADMM; with S fixed, A takes Armijo-backtracked
    gradient steps.  Rows of S are only replaced when they do not
    increase the objective, so the trace is non-increasing.  Stops on
    relative objective change below ``hyper.rel_tol``.
    """
    Xw, Zw, n_eff = _weighted(X, Z, weights)
    S, A = _svd_warm_start(Xw, Zw, hyper) if init is None else init
    S = np.array(S, dtype=np.float64)
    A = np.array(A, dtype=np.float64)
    lam_s, gamma = hyper.lambda_s, hyper.lambda_a
    trace = [gomtl_objective(S, A, Xw, Zw, lam_s, gamma, n_eff)]
    step = 1.0
    converged = False
    for _ in range(hyper.max_iters):
        S = _gomtl_s_step(S, A, Xw, Zw, lam_s, n_eff, hyper.admm_rho)
        A, step = _gomtl_a_step(S, A, Xw, Zw, gamma, n_eff, step)
        trace.append(gomtl_objective(S, A, Xw, Zw, lam_s, gamma, n_eff))
        if abs(trace[-2] - trace[-1]) < hyper.rel_tol * max(1.0, abs(trace[-2])):
            converged = True
            break
    report = FitReport(
        objective_trace=tuple(trace), iterations=len(trace) - 1, converged=converged
    )
    return MtlModel(S=S, A=A, variant="gomtl", hyper=hyper, report=report)


def gomtl_s_rows(A, X, Z, lambda_s, rho=1.0, n_eff=None):
    """ADMM lasso solve of every S row for fixed A; returns d_z x T."""
    n = X.shape[1] if n_eff is None else n_eff
    design = (A @ X).T * np.sqrt(X.shape[1] / n)
    coef, _ = lasso_admm(design, Z.T * np.sqrt(X.shape[1] / n), lambda_s, rho=rho)
    return coef.T


def _gomtl_s_step(S, A, X, Z, lam_s, n_eff, rho):
    candidate = gomtl_s_rows(A, X, Z, lam_s, rho=rho, n_eff=n_eff)
    AX = A @ X
    new_S = S.copy()
    for t in range(S.shape[0]):
        old = _row_objective(S[t], AX, Z[t], lam_s, n_eff)
        new = _row_objective(candidate[t], AX, Z[t], lam_s, n_eff)
        if new <= old:
            new_S[t] = candidate[t]
    return new_S


def _row_objective(s_row, AX, z_row, lam_s, n_eff):
    resid = z_row - s_row @ AX
    return float(np.dot(resid, resid) / n_eff + lam_s * np.sum(np.abs(s_row)))


def _gomtl_a_step(S, A, X, Z, gamma, n_eff, step, c_armijo=1e-4, max_backtracks=50):
    def h(mat):
        resid = Z - S @ mat @ X
        return float(np.sum(resid * resid) / n_eff + gamma * np.sum(mat * mat))

    current = h(A)
    grad = (2.0 / n_eff) * S.T @ (S @ A @ X - Z) @ X.T + 2.0 * gamma * A
    grad_sq = float(np.sum(grad * grad))
    if grad_sq == 0.0:
        return A, step
    step = min(step * 2.0, 1e6)
    for _ in range(max_backtracks):
        trial = A - step * grad
        if h(trial) <= current - c_armijo * step * grad_sq:
            return trial, step
        step *= 0.5
    return A, step


def mte_objective(S, A, L, X, Z, hyper, n_eff=None):
    n = X.shape[1] if n_eff is None else n_eff
    fit = Z - S @ L
    consistency = L - A @ X
    return float(
        (np.sum(fit * fit) + np.sum(consistency * consistency)) / n
        + hyper.lambda_s * np.sum(S * S)
        + hyper.lambda_a * np.sum(A * A)
        + hyper.lambda_l * np.sum(L * L)
    )


def update_latent_codes(S, A, X, Z, lambda_l, n_eff):
    """Exact minimiser over L: (S^T S + (lambda_l*n + 1) I)^-1 (S^T Z + A X)."""
    T = S.shape[1]
    lhs = S.T @ S + (lambda_l * n_eff + 1.0) * np.eye(T)
    return _solve_spd(lhs, S.T @ Z + A @ X, "latent-code update")


def update_combination(Z, L, lambda_s, n_eff):
    """Exact minimiser over S: Z L^T (L L^T + lambda_s*n I)^-1."""
    T = L.shape[0]
    lhs = L @ L.T + lambda_s * n_eff * np.eye(T)
    return _solve_spd(lhs, L @ Z.T, "combination update").T


def update_latent_regressors(X, L, lambda_a, n_eff):
    """Exact minimiser over A: L X^T (X X^T + lambda_a*n I)^-1."""
    lhs = X @ X.T + lambda_a * n_eff * np.eye(X.shape[0])
    return _solve_spd(lhs, X @ L.T, "latent-regressor update").T


def _solve_spd(lhs, rhs, what):
    try:
        return cho_solve(cho_factor(lhs), rhs)
    except np.linalg.LinAlgError:
        raise DataError(
            f"singular system in {what}; use positive regularisers"
        ) from None


def mte_fit(X, Z, hyper, weights=None, init=None):
    """Explicit multi-task embedding: alternate exact block updates.

    Each sweep updates L, then S, then A, each to the exact minimiser
    of the joint objective with the other blocks fixed, so the
    objective trace is non-increasing.  Returns the fitted model, the
    latent codes L (T x n), and the fit report.
    """
    Xw, Zw, n_eff = _weighted(X, Z, weights)
    if init is None:
        S, A = _svd_warm_start(Xw, Zw, hyper)
    else:
        S, A = (np.array(m, dtype=np.float64) for m in init)
    L = A @ Xw
    trace = [mte_objective(S, A, L, Xw, Zw, hyper, n_eff)]
    converged = False
    for _ in range(hyper.max_iters):
        L = update_latent_codes(S, A, Xw, Zw, hyper.lambda_l, n_eff)
        S = update_combination(Zw, L, hyper.lambda_s, n_eff)
        A = update_latent_regressors(Xw, L, hyper.lambda_a, n_eff)
        trace.append(mte_objective(S, A, L, Xw, Zw, hyper, n_eff))
        if abs(trace[-2] - trace[-1]) < hyper.rel_tol * max(1.0, abs(trace[-2])):
            converged = True
            break
    report = FitReport(
        objective_trace=tuple(trace), iterations=len(trace) - 1, converged=converged
    )
    model = MtlModel(S=S, A=A, variant="mte", hyper=hyper, report=report)
    return model, L, report


def predict(model, X):
    """Map features into the label-embedding space (d_z x n)."""
    X = as_matrix(X, "X")
    if isinstance(model, StlModel):
        if model.W.shape[1] != X.shape[0]:
            raise DataError(
                f"model expects {model.W.shape[1]}-d features, got {X.shape[0]}"
            )
        return model.W @ X
    if model.A.shape[1] != X.shape[0]:
        raise DataError(
            f"model expects {model.A.shape[1]}-d features, got {X.shape[0]}"
        )
    return model.S @ (model.A @ X)


def latent_project(model, X):
    """Project features into the latent task space (T x n)."""
    if not isinstance(model, MtlModel):
        raise DataError("latent projection requires a multi-task model")
    X = as_matrix(X, "X")
    if model.A.shape[1] != X.shape[0]:
        raise DataError(
            f"model expects {model.A.shape[1]}-d features, got {X.shape[0]}"
        )
    return model.A @ X


def save_model(model, out_dir, stem="model", seed=0):
    """Write model matrices (binary format) plus a metadata text file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = out_dir / f"{stem}_meta.txt"
    lines = [f"seed={seed}"]
    if isinstance(model, StlModel):
        save_matrix(model.W, out_dir / f"{stem}_W.dmat")
        lines += ["variant=rr", f"lambda_ridge={model.lam!r}"]
    else:
        save_matrix(model.S, out_dir / f"{stem}_S.dmat")
        save_matrix(model.A, out_dir / f"{stem}_A.dmat")
        lines.append(f"variant={model.variant}")
        h = model.hyper
        lines += [
            f"lambda_ridge={h.lambda_ridge!r}",
            f"lambda_s={h.lambda_s!r}",
            f"lambda_a={h.lambda_a!r}",
            f"lambda_l={h.lambda_l!r}",
            f"latent_t={h.latent_t}",
            f"admm_rho={h.admm_rho!r}",
            f"max_iters={h.max_iters}",
            f"rel_tol={h.rel_tol!r}",
        ]
    meta.write_text("\n".join(lines) + "\n")
    return meta


def load_model(out_dir, stem="model"):
    out_dir = Path(out_dir)
    meta = out_dir / f"{stem}_meta.txt"
    if not meta.exists():
        raise DataError(f"model metadata not found: {meta}")
    fields = {}
    for line in meta.read_text().splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            fields[key] = value
    variant = fields.get("variant")
    if variant == "rr":
        W = load_matrix(out_dir / f"{stem}_W.dmat")
        return StlModel(W=W, lam=float(fields["lambda_ridge"]))
    S = load_matrix(out_dir / f"{stem}_S.dmat")
    A = load_matrix(out_dir / f"{stem}_A.dmat")
    hyper = HyperParams(
        lambda_ridge=float(fields["lambda_ridge"]),
        lambda_s=float(fields["lambda_s"]),
        lambda_a=float(fields["lambda_a"]),
        lambda_l=float(fields["lambda_l"]),
        latent_t=int(fields["latent_t"]),
        admm_rho=float(fields["admm_rho"]),
        max_iters=int(fields["max_iters"]),
        rel_tol=float(fields["rel_tol"]),
    )
    return MtlModel(S=S, A=A, variant=variant, hyper=hyper)

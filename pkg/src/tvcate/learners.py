"""Weighted base learners: regression and probabilistic classification.

All downstream estimators consume these two interfaces only, so any model
with the same contract could be swapped in.  The built-in regressors are

* ``ridge-random-features`` — closed-form weighted ridge on a random cosine
  feature map phi(x) = sqrt(2/F) * cos(W x + b), W ~ Normal(0, 1/bandwidth^2),
  b ~ Uniform[0, 2*pi).  An unpenalized intercept is fitted via weighted
  centering, so the solved objective is

      sum_i w_i (y_i - alpha - beta . (phi(x_i) - mean_w phi))^2
          + ridge_lambda * ||beta||^2,

  with weights normalized to unit mass (making the fit invariant to weight
  rescaling and ridge_lambda comparable across sample sizes).  Heavy
  regularization therefore shrinks predictions toward the weighted target
  mean rather than toward zero.
* ``k-nearest-neighbor`` — weighted mean of the k nearest training targets.
* ``lookup-table`` — exact-match cell means for discrete feature vectors.

The classifier is multinomial logistic regression (optional random cosine
features) fitted by L-BFGS on the weighted cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import linalg, optimize
from scipy.spatial import cKDTree

__all__ = [
    "RegressorSpec",
    "FittedRegressor",
    "ClassifierSpec",
    "FittedClassifier",
    "fit_regressor",
    "predict",
    "fit_classifier",
    "random_cosine_map",
]

REGRESSOR_KINDS = ("ridge-random-features", "k-nearest-neighbor", "lookup-table")

# grids used when a regularization strength is set to "auto"
RIDGE_LAMBDA_GRID = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
CLASSIFIER_L2_GRID = (1e-3, 3e-3, 1e-2, 3e-2, 1e-1)


def _validate_penalty(value, name):
    if isinstance(value, str):
        if value != "auto":
            raise ValueError(f"{name} must be a number >= 0 or 'auto'")
    elif value < 0:
        raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class RegressorSpec:
    """Configuration of a weighted regressor.

    feature_count, bandwidth, and seed control the random cosine map (ridge
    kind only); k is the neighbor count for the kNN kind.  ridge_lambda may
    be the string "auto", selecting the penalty from a fixed grid by
    generalized cross-validation at fit time.
    """

    kind: str = "ridge-random-features"
    feature_count: int = 256
    bandwidth: float = 1.0
    ridge_lambda: float | str = 1e-4
    k: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.kind not in REGRESSOR_KINDS:
            raise ValueError(f"unknown regressor kind {self.kind!r}")
        if self.feature_count < 1 or self.k < 1:
            raise ValueError("feature_count and k must be >= 1")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be > 0")
        _validate_penalty(self.ridge_lambda, "ridge_lambda")


def random_cosine_map(in_dim: int, feature_count: int, bandwidth: float, seed):
    """Draw the (W, b) parameters of the random cosine feature map."""
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, 1.0 / bandwidth, size=(in_dim, feature_count))
    b = rng.uniform(0.0, 2.0 * np.pi, size=feature_count)
    return W, b


def _cosine_features(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(2.0 / W.shape[1]) * np.cos(X @ W + b)


def _normalized_weights(weight, n) -> np.ndarray:
    if weight is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weight, dtype=float)
    if w.shape != (n,):
        raise ValueError("weight must be one value per row")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and >= 0")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights must not be all zero")
    return w / total


@dataclass(frozen=True)
class FittedRegressor:
    """Immutable fitted regressor; ``predict`` is deterministic and total."""

    spec: RegressorSpec
    in_dim: int
    n_rows: int
    params: dict
    codec: object = None

    def predict(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        squeeze = features.ndim == 1
        if squeeze:
            features = features[None, :]
        if features.shape[1] != self.in_dim:
            raise ValueError(f"feature width {features.shape[1]} does not match "
                             f"training width {self.in_dim}")
        if self.spec.kind == "ridge-random-features":
            phi = _cosine_features(features, self.params["W"], self.params["b"])
            out = self.params["intercept"] + (phi - self.params["phi_mean"]) @ self.params["beta"]
        elif self.spec.kind == "k-nearest-neighbor":
            out = self._predict_knn(features)
        else:
            out = self._predict_lookup(features)
        return out[0] if squeeze else out

    def _predict_knn(self, features):
        tree: cKDTree = self.params["tree"]
        k = min(self.spec.k, self.n_rows)
        _, idx = tree.query(features, k=k)
        idx = np.atleast_2d(idx)
        if idx.shape[0] != features.shape[0]:       # k == 1 returns (n,)
            idx = idx.reshape(features.shape[0], -1)
        ny = self.params["y"][idx]
        nw = self.params["w"][idx]
        tot = nw.sum(axis=1)
        out = np.where(tot > 0, (ny * nw).sum(axis=1) / np.where(tot > 0, tot, 1.0),
                       ny.mean(axis=1))
        return out

    def _predict_lookup(self, features):
        table = self.params["table"]
        default = self.params["default"]
        out = np.empty(features.shape[0])
        for i, row in enumerate(features):
            cell = table.get(row.tobytes())
            out[i] = cell if cell is not None else default
        return out

    def to_dict(self) -> dict:
        state = {"spec": self.spec.__dict__, "in_dim": self.in_dim, "n_rows": self.n_rows}
        if self.spec.kind == "ridge-random-features":
            state["params"] = {k: self.params[k].tolist() if isinstance(self.params[k], np.ndarray)
                               else self.params[k]
                               for k in ("W", "b", "beta", "phi_mean", "intercept",
                                         "ridge_lambda_used")}
        elif self.spec.kind == "k-nearest-neighbor":
            state["params"] = {"X": self.params["X"].tolist(), "y": self.params["y"].tolist(),
                               "w": self.params["w"].tolist()}
        else:
            state["params"] = {"keys": [list(map(float, np.frombuffer(kb)))
                                        for kb in self.params["table"]],
                               "values": list(self.params["table"].values()),
                               "default": self.params["default"]}
        return state

    @staticmethod
    def from_dict(state: dict) -> "FittedRegressor":
        spec = RegressorSpec(**state["spec"])
        raw = state["params"]
        if spec.kind == "ridge-random-features":
            params = {"W": np.array(raw["W"]), "b": np.array(raw["b"]),
                      "beta": np.array(raw["beta"]), "phi_mean": np.array(raw["phi_mean"]),
                      "intercept": float(raw["intercept"]),
                      "ridge_lambda_used": float(raw["ridge_lambda_used"])}
        elif spec.kind == "k-nearest-neighbor":
            X = np.array(raw["X"])
            params = {"X": X, "y": np.array(raw["y"]), "w": np.array(raw["w"]),
                      "tree": cKDTree(X)}
        else:
            table = {np.array(k, dtype=float).tobytes(): float(v)
                     for k, v in zip(raw["keys"], raw["values"])}
            params = {"table": table, "default": float(raw["default"])}
        return FittedRegressor(spec, int(state["in_dim"]), int(state["n_rows"]), params)


def fit_regressor(spec: RegressorSpec, features, target, weight=None,
                  codec=None) -> FittedRegressor:
    """Fit a weighted regressor on rows (features, target, weight).

    Weights are normalized to unit mass internally, so only their relative
    sizes matter.  For the ridge kind the returned model is the exact
    minimizer of the weighted-centered objective documented in the module
    docstring; a singular system with ridge_lambda = 0 raises.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(target, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < 1:
        raise ValueError("need at least one training row")
    if y.shape != (n,):
        raise ValueError("target must be one value per row")
    w = _normalized_weights(weight, n)

    if spec.kind == "ridge-random-features":
        params = _fit_ridge_rff(spec, X, y, w)
    elif spec.kind == "k-nearest-neighbor":
        params = {"X": X, "y": y, "w": w, "tree": cKDTree(X)}
    else:
        params = _fit_lookup(X, y, w)
    return FittedRegressor(spec, X.shape[1], n, params, codec)


def _fit_ridge_rff(spec, X, y, w):
    W, b = random_cosine_map(X.shape[1], spec.feature_count, spec.bandwidth, spec.seed)
    phi = _cosine_features(X, W, b)
    phi_mean = w @ phi
    y_mean = float(w @ y)
    phi_c = phi - phi_mean
    gram = (phi_c * w[:, None]).T @ phi_c
    rhs = phi_c.T @ (w * (y - y_mean))
    lam = spec.ridge_lambda
    if lam == "auto":
        lam = _gcv_lambda(gram, rhs, float(w @ (y - y_mean) ** 2), len(y))
    if lam > 0:
        gram = gram.copy()
        gram[np.diag_indices_from(gram)] += lam
        beta = linalg.cho_solve(linalg.cho_factor(gram), rhs)
    else:
        try:
            beta = linalg.cho_solve(linalg.cho_factor(gram), rhs)
        except linalg.LinAlgError as exc:
            raise ValueError("singular system with ridge_lambda=0; regularize or "
                             "drop collinear features") from exc
    return {"W": W, "b": b, "beta": beta, "phi_mean": phi_mean, "intercept": y_mean,
            "ridge_lambda_used": float(lam)}


def _gcv_lambda(gram, rhs, weighted_yy, n_rows):
    """Pick the ridge penalty minimizing generalized cross-validation.

    Works in the eigenbasis of the (weighted, centered) gram matrix, so the
    whole grid costs one eigendecomposition.
    """
    d, V = linalg.eigh(gram)
    d = np.maximum(d, 0.0)
    c = V.T @ rhs
    best_lam, best_gcv = RIDGE_LAMBDA_GRID[0], np.inf
    for lam in RIDGE_LAMBDA_GRID:
        bt = c / (d + lam)
        ssr = weighted_yy - 2.0 * float(c @ bt) + float((bt * bt) @ d)
        df = float(np.sum(d / (d + lam))) + 1.0
        if df >= n_rows:
            continue
        gcv = ssr / (1.0 - df / n_rows) ** 2
        if gcv < best_gcv:
            best_lam, best_gcv = lam, gcv
    return best_lam


def _fit_lookup(X, y, w):
    sums: dict[bytes, list] = {}
    for row, yi, wi in zip(X, y, w):
        key = row.tobytes()
        cell = sums.setdefault(key, [0.0, 0.0, 0.0, 0])
        cell[0] += wi * yi
        cell[1] += wi
        cell[2] += yi
        cell[3] += 1
    table = {}
    for key, (wy, ws, ys, cnt) in sums.items():
        table[key] = wy / ws if ws > 0 else ys / cnt
    default = float(np.dot(w, y) / w.sum())
    return {"table": table, "default": default}


def predict(model: FittedRegressor, features) -> np.ndarray:
    """Functional alias for ``model.predict(features)``."""
    return model.predict(features)


@dataclass(frozen=True)
class ClassifierSpec:
    """Multinomial logistic classifier configuration.

    With use_random_features the inputs pass through the same random cosine
    map as the ridge regressor, which lets the linear-in-parameters model
    capture oscillatory treatment-assignment rules.  l2 defaults to "auto":
    the penalty is chosen from a fixed grid by held-out log-loss at fit
    time, which adapts between strongly driven and near-random assignment
    mechanisms.
    """

    use_random_features: bool = True
    feature_count: int = 64
    bandwidth: float = 2.0
    l2: float | str = "auto"
    tol: float = 1e-9
    max_iter: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.feature_count < 1 or self.max_iter < 1:
            raise ValueError("feature_count and max_iter must be >= 1")
        if self.bandwidth <= 0 or self.tol <= 0:
            raise ValueError("bandwidth and tol must be > 0")
        _validate_penalty(self.l2, "l2")


_PROB_EPS = 1e-12


def _softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def _nll_and_grad(theta_flat, phi, labels, w, l2, n_classes):
    theta = theta_flat.reshape(phi.shape[1], n_classes)
    P = _softmax(phi @ theta)
    like = P[np.arange(labels.size), labels]
    nll = -np.dot(w, np.log(np.maximum(like, 1e-300)))
    G = P.copy()
    G[np.arange(labels.size), labels] -= 1.0
    grad = phi.T @ (G * w[:, None])
    if l2 > 0:     # intercept column (last feature) is unpenalized
        nll += 0.5 * l2 * np.sum(theta[:-1] ** 2)
        grad[:-1] += l2 * theta[:-1]
    return nll, grad.ravel()


@dataclass(frozen=True)
class FittedClassifier:
    """Immutable fitted classifier; probabilities are clipped only at evaluation."""

    spec: ClassifierSpec
    in_dim: int
    n_classes: int
    n_rows: int
    params: dict
    codec: object = None

    def _features(self, X):
        if self.spec.use_random_features:
            phi = _cosine_features(X, self.params["W"], self.params["b"])
        else:
            phi = X
        return np.hstack([phi, np.ones((phi.shape[0], 1))])

    def predict_proba(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        squeeze = features.ndim == 1
        if squeeze:
            features = features[None, :]
        if features.shape[1] != self.in_dim:
            raise ValueError(f"feature width {features.shape[1]} does not match "
                             f"training width {self.in_dim}")
        P = _softmax(self._features(features) @ self.params["theta"])
        P = np.clip(P, _PROB_EPS, 1.0 - _PROB_EPS)
        P /= P.sum(axis=1, keepdims=True)
        return P[0] if squeeze else P

    def to_dict(self) -> dict:
        params = {"theta": self.params["theta"].tolist(),
                  "l2_used": self.params["l2_used"]}
        if self.spec.use_random_features:
            params["W"] = self.params["W"].tolist()
            params["b"] = self.params["b"].tolist()
        return {"spec": self.spec.__dict__, "in_dim": self.in_dim,
                "n_classes": self.n_classes, "n_rows": self.n_rows, "params": params}

    @staticmethod
    def from_dict(state: dict) -> "FittedClassifier":
        spec = ClassifierSpec(**state["spec"])
        params = {"theta": np.array(state["params"]["theta"]),
                  "l2_used": float(state["params"]["l2_used"])}
        if spec.use_random_features:
            params["W"] = np.array(state["params"]["W"])
            params["b"] = np.array(state["params"]["b"])
        return FittedClassifier(spec, int(state["in_dim"]), int(state["n_classes"]),
                                int(state["n_rows"]), params)


def fit_classifier(spec: ClassifierSpec, features, labels, weight=None,
                   n_classes: Optional[int] = None, codec=None) -> FittedClassifier:
    """Fit multinomial logistic regression by weighted cross-entropy.

    Raises if fewer than two classes are present or if L-BFGS fails to reach
    the gradient tolerance within max_iter (the error reports the final
    gradient norm).
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(labels, dtype=int)
    n = X.shape[0]
    if labels.shape != (n,):
        raise ValueError("labels must be one class index per row")
    present = np.unique(labels)
    if present.size < 2:
        raise ValueError("single-class data: need >= 2 classes to fit a classifier")
    K = int(n_classes) if n_classes is not None else int(labels.max()) + 1
    if labels.max() >= K:
        raise ValueError("label exceeds n_classes")
    w = _normalized_weights(weight, n)

    params = {}
    if spec.use_random_features:
        W, b = random_cosine_map(X.shape[1], spec.feature_count, spec.bandwidth, spec.seed)
        params["W"], params["b"] = W, b
        phi = _cosine_features(X, W, b)
    else:
        phi = X
    phi = np.hstack([phi, np.ones((n, 1))])

    l2 = spec.l2
    if l2 == "auto":
        l2 = _holdout_l2(spec, phi, labels, w, K)
    params["theta"] = _solve_logistic(spec, phi, labels, w, l2, K)
    params["l2_used"] = float(l2)
    return FittedClassifier(spec, X.shape[1], K, n, params, codec)


def _solve_logistic(spec, phi, labels, w, l2, n_classes, theta0=None):
    if theta0 is None:
        theta0 = np.zeros(phi.shape[1] * n_classes)
    res = optimize.minimize(
        _nll_and_grad, theta0, args=(phi, labels, w, l2, n_classes),
        method="L-BFGS-B", jac=True,
        options={"maxiter": spec.max_iter, "gtol": spec.tol, "ftol": 0.0},
    )
    gnorm = float(np.max(np.abs(res.jac)))
    if not res.success and gnorm > 1e-5:
        raise ValueError(f"classifier failed to converge within {spec.max_iter} "
                         f"iterations; final gradient max-norm {gnorm:.3e}")
    return res.x.reshape(phi.shape[1], n_classes)


def _holdout_l2(spec, phi, labels, w, n_classes):
    """Pick the l2 penalty by held-out log-loss with a paired one-SE rule.

    Among the grid, the strongest penalty whose mean held-out loss is within
    one paired standard error of the minimizer wins; on label-independent
    data every penalty ties statistically and the strongest is chosen, while
    a real signal keeps the looser fits.  Deterministic given ``spec.seed``.
    Falls back to the middle of the grid when the sample is too small to
    split or either part loses a class.
    """
    n = phi.shape[0]
    fallback = CLASSIFIER_L2_GRID[len(CLASSIFIER_L2_GRID) // 2]
    if n < 50:
        return fallback
    rng = np.random.default_rng([spec.seed, 0x5E1EC7])
    perm = rng.permutation(n)
    cut = int(0.8 * n)
    tr, va = perm[:cut], perm[cut:]
    if np.unique(labels[tr]).size < 2 or np.unique(labels[va]).size < 2:
        return fallback
    w_tr = w[tr] / w[tr].sum()
    w_va = w[va] / w[va].sum()
    row_losses, theta = [], None
    for l2 in CLASSIFIER_L2_GRID:       # warm-start along the grid
        theta = _solve_logistic(spec, phi[tr], labels[tr], w_tr, l2, n_classes,
                                theta0=None if theta is None else theta.ravel())
        P = _softmax(phi[va] @ theta)
        row_losses.append(-np.log(np.maximum(P[np.arange(va.size), labels[va]],
                                             _PROB_EPS)))
    means = [float(w_va @ rl) for rl in row_losses]
    best = int(np.argmin(means))
    for i in range(len(CLASSIFIER_L2_GRID) - 1, best, -1):
        diff = row_losses[i] - row_losses[best]
        mean_d = float(w_va @ diff)
        se_d = float(np.sqrt(np.sum(w_va ** 2 * (diff - mean_d) ** 2)))
        if mean_d <= se_d:
            return CLASSIFIER_L2_GRID[i]
    return CLASSIFIER_L2_GRID[best]

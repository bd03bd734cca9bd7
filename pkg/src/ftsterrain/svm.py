"""Multiclass kernel support vector classifier.

The binary machine solves the soft-margin dual

    max_a  sum(a) - 1/2 a^T Q a,   Q_ij = y_i y_j K(x_i, x_j)
    s.t.   0 <= a_i <= C,  sum(a_i y_i) = 0

by sequential minimal optimization: each step picks the maximal violating
pair using second-order information and solves the two-variable subproblem
analytically. The stopping rule bounds every KKT violation by ``tol``.

Multiclass problems are reduced to binary ones either one-vs-rest (one
machine per class) or one-vs-one (one machine per class pair).
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import product

import numpy as np

from .errors import ConfigError, ConvergenceWarning, DegenerateDataError, ShapeError
from .metrics import confusion_matrix  # noqa: F401  (re-exported for evaluation)
from .preprocessing import Scaler, canonical_classes, stratified_split


class KernelKind(str, Enum):
    LINEAR = "linear"
    RBF = "rbf"
    POLY = "poly"
    SIGMOID = "sigmoid"


KERNEL_ORDER = (KernelKind.LINEAR, KernelKind.RBF, KernelKind.POLY, KernelKind.SIGMOID)


class Reduction(str, Enum):
    ONE_VS_REST = "ovr"
    ONE_VS_ONE = "ovo"


@dataclass(frozen=True)
class KernelConfig:
    kind: KernelKind = KernelKind.RBF
    gamma: float = 1.0
    degree: int = 3
    coef0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if int(self.degree) < 1:
            raise ConfigError("polynomial degree must be at least 1")


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    kernel: KernelConfig = field(default_factory=KernelConfig)
    reduction: Reduction = Reduction.ONE_VS_REST
    tol: float = 1e-3
    # sweeps of n_samples pair updates; None means 10 * n_samples
    max_passes: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "reduction", Reduction(self.reduction))
        if not self.C > 0:
            raise ConfigError("C must be positive")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")


PAPER_GRID = {
    "C": (0.1, 1.0, 10.0, 100.0),
    "gamma": (1.0, 0.1, 0.01, 0.001),
    "kernel": KERNEL_ORDER,
}


def kernel_matrix(k: KernelConfig, A, B) -> np.ndarray:
    """Gram matrix ``K[i, j] = k(A[i], B[j])``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"kernel arguments have {A.shape[1]} and {B.shape[1]} features")
    dot = A @ B.T
    if k.kind is KernelKind.LINEAR:
        return dot
    if k.kind is KernelKind.RBF:
        sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * dot
        return np.exp(-k.gamma * np.maximum(sq, 0.0))
    if k.kind is KernelKind.POLY:
        return (k.gamma * dot + k.coef0) ** int(k.degree)
    return np.tanh(k.gamma * dot + k.coef0)


def kernel_eval(k: KernelConfig, u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ShapeError(f"kernel arguments have shapes {u.shape} and {v.shape}")
    if k.kind is KernelKind.RBF:
        d = u - v
        return float(np.exp(-k.gamma * (d @ d)))
    return float(kernel_matrix(k, u[None, :], v[None, :])[0, 0])


_TAU = 1e-12
# floor on the default update budget; tiny rank-deficient problems need it
MIN_UPDATES = 100_000


@dataclass
class DualSolution:
    alpha: np.ndarray
    bias: float
    n_iter: int
    converged: bool
    gap: float


def dual_objective(alpha, y, K) -> float:
    """Value of the (maximized) dual objective."""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ np.asarray(K) @ ay)


def solve_dual(K, y, C: float, tol: float = 1e-3, max_iter: int | None = None) -> DualSolution:
    """SMO on a precomputed Gram matrix.

    ``y`` holds +1/-1 labels. Returns the multipliers and the bias ``b`` of
    ``f(x) = sum_i a_i y_i K(x_i, x) + b``. Stops when the maximal KKT
    violation ``m(a) - M(a)`` drops below ``tol``.
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    if max_iter is None:
        max_iter = max(10 * n * n, MIN_UPDATES)
    QD = np.diag(K).copy()
    yl = y.tolist()
    alpha = np.zeros(n)
    # F = -y * G where G is the gradient of 1/2 a^T Q a - sum(a)
    F = y.copy()
    pos = y > 0
    # index sets of the working-set rule, updated in place for i and j only
    up = np.ones(n, dtype=bool)
    up[~pos] = False
    low = ~up
    neg_inf = np.full(n, -np.inf)
    pos_inf = np.full(n, np.inf)
    cand = np.empty(n)
    score = np.empty(n)

    converged = False
    gap = np.inf
    it = 0
    while it < max_iter:
        np.copyto(cand, neg_inf)
        np.copyto(cand, F, where=up)
        i = int(np.argmax(cand))
        g_max = float(cand[i])
        np.copyto(cand, pos_inf)
        np.copyto(cand, F, where=low)
        gap = g_max - float(cand.min())
        if gap < tol:
            converged = True
            break

        Ki = K[i]
        b = g_max - F
        curv = QD[i] + QD - 2.0 * Ki
        curv[curv <= 0] = _TAU
        np.copyto(score, pos_inf)
        np.divide(-(b * b), curv, out=score, where=low & (b > 0))
        j = int(np.argmin(score))

        yi, yj = yl[i], yl[j]
        Gi, Gj = -yi * float(F[i]), -yj * float(F[j])
        ai_old, aj_old = float(alpha[i]), float(alpha[j])
        Kij = float(Ki[j])
        if yi != yj:
            quad = float(QD[i] + QD[j]) - 2.0 * Kij
            if quad <= 0:
                quad = _TAU
            delta = (-Gi - Gj) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = float(QD[i] + QD[j]) - 2.0 * Kij
            if quad <= 0:
                quad = _TAU
            delta = (Gi - Gj) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        # dF_k = -(y_i K_ik da_i + y_j K_jk da_j)
        F -= (yi * (ai - ai_old)) * Ki + (yj * (aj - aj_old)) * K[j]
        for k, a in ((i, ai), (j, aj)):
            if yl[k] > 0:
                up[k] = a < C
                low[k] = a > 0
            else:
                up[k] = a > 0
                low[k] = a < C
        it += 1

    G = -y * F
    bias = _bias(alpha, y, G, C)
    return DualSolution(alpha, bias, it, converged, float(gap))


def _bias(alpha, y, G, C) -> float:
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        r = float(np.mean(yG[free]))
    else:
        at_upper = alpha >= C
        ub_mask = (at_upper & (y < 0)) | (~at_upper & (y > 0))
        lb_mask = ~ub_mask
        ub = float(np.min(yG[ub_mask])) if np.any(ub_mask) else np.inf
        lb = float(np.max(yG[lb_mask])) if np.any(lb_mask) else -np.inf
        if np.isinf(ub):
            r = lb
        elif np.isinf(lb):
            r = ub
        else:
            r = 0.5 * (ub + lb)
    return -r


@dataclass(frozen=True)
class BinaryMachine:
    """One trained binary classifier. Positive decision values favour ``positive``."""

    positive: str
    negative: str
    kernel: KernelConfig
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    C: float
    n_iter: int = 0
    converged: bool = True

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.support_vectors.shape[0] == 0:
            return np.full(X.shape[0], self.bias)
        return kernel_matrix(self.kernel, X, self.support_vectors) @ self.dual_coef + self.bias

    def to_dict(self) -> dict:
        return {
            "positive": self.positive,
            "negative": self.negative,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "bias": self.bias,
            "C": self.C,
            "n_iter": self.n_iter,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d, kernel: KernelConfig) -> "BinaryMachine":
        sv = np.asarray(d["support_vectors"], dtype=np.float64)
        return cls(d["positive"], d["negative"], kernel, sv.reshape(len(d["dual_coef"]), -1),
                   np.asarray(d["dual_coef"], dtype=np.float64), float(d["bias"]), float(d["C"]),
                   int(d["n_iter"]), bool(d["converged"]))


def train_binary(X, y, cfg: SvmConfig, positive="+1", negative="-1") -> BinaryMachine:
    """Fit one soft-margin machine on already standardized features.

    ``y`` contains +1 / -1. Emits :class:`ConvergenceWarning` and keeps the
    last iterate when the pass budget runs out.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeError(f"X has shape {X.shape} but there are {y.size} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DegenerateDataError("binary labels must be +1 or -1")
    if np.all(y > 0) or np.all(y < 0):
        raise DegenerateDataError("binary training needs samples of both classes")
    n = y.size
    if cfg.max_passes is not None:
        max_iter = cfg.max_passes * n
    else:
        max_iter = max(10 * n * n, MIN_UPDATES)
    K = kernel_matrix(cfg.kernel, X, X)
    sol = solve_dual(K, y, cfg.C, cfg.tol, max_iter=max_iter)
    if not sol.converged:
        warnings.warn(
            f"SMO stopped after {sol.n_iter} updates with KKT gap {sol.gap:.3g} > tol {cfg.tol:g}",
            ConvergenceWarning,
            stacklevel=2,
        )
    sv = sol.alpha > 0
    return BinaryMachine(str(positive), str(negative), cfg.kernel, X[sv].copy(),
                         (sol.alpha[sv] * y[sv]).copy(), sol.bias, cfg.C, sol.n_iter, sol.converged)


@dataclass(frozen=True)
class SvmModel:
    classes: tuple
    machines: tuple
    scaler: Scaler
    config: SvmConfig

    def decision_values(self, X) -> np.ndarray:
        Z = self.scaler.transform(X)
        return np.column_stack([m.decision_function(Z) for m in self.machines])

    def predict(self, X) -> np.ndarray:
        return predict(self, X)

    def to_dict(self) -> dict:
        k = self.config.kernel
        return {
            "kind": "svm",
            "classes": list(self.classes),
            "config": {
                "C": self.config.C,
                "reduction": self.config.reduction.value,
                "tol": self.config.tol,
                "max_passes": self.config.max_passes,
                "kernel": {"kind": k.kind.value, "gamma": k.gamma, "degree": k.degree, "coef0": k.coef0},
            },
            "scaler": self.scaler.to_dict(),
            "preprocessing": "z-score standardization fit on the training split",
            "machines": [m.to_dict() for m in self.machines],
        }

    @classmethod
    def from_dict(cls, d) -> "SvmModel":
        c = d["config"]
        kernel = KernelConfig(**c["kernel"])
        cfg = SvmConfig(c["C"], kernel, c["reduction"], c["tol"], c["max_passes"])
        machines = tuple(BinaryMachine.from_dict(m, kernel) for m in d["machines"])
        return cls(tuple(d["classes"]), machines, Scaler.from_dict(d["scaler"]), cfg)


def train_multiclass(X, y, cfg: SvmConfig) -> SvmModel:
    """Standardize, then fit one-vs-rest or one-vs-one binary machines."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=object).astype(str)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeError(f"X has shape {X.shape} but there are {y.size} labels")
    classes = canonical_classes(y)
    if len(classes) < 2:
        raise DegenerateDataError(f"need at least two classes, got {list(classes)}")
    scaler = Scaler.fit(X)
    Z = scaler.transform(X)
    machines = []
    if cfg.reduction is Reduction.ONE_VS_REST:
        for c in classes:
            yy = np.where(y == c, 1.0, -1.0)
            machines.append(train_binary(Z, yy, cfg, positive=c, negative="rest"))
    else:
        for a_i, a in enumerate(classes):
            for b in classes[a_i + 1:]:
                mask = (y == a) | (y == b)
                yy = np.where(y[mask] == a, 1.0, -1.0)
                machines.append(train_binary(Z[mask], yy, cfg, positive=a, negative=b))
    return SvmModel(classes, tuple(machines), scaler, cfg)


def predict(model: SvmModel, X) -> np.ndarray:
    """Class labels for the rows of ``X`` (or a single feature vector).

    One-vs-rest takes the largest decision value. One-vs-one counts votes,
    breaks ties by the summed decision values and then by class order.
    Remaining ties always go to the earlier class.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    D = model.decision_values(X)
    classes = np.array(model.classes, dtype=object)
    if model.config.reduction is Reduction.ONE_VS_REST:
        idx = np.argmax(D, axis=1)
    else:
        k = len(model.classes)
        index = {c: i for i, c in enumerate(model.classes)}
        votes = np.zeros((D.shape[0], k))
        score = np.zeros((D.shape[0], k))
        for col, m in enumerate(model.machines):
            a, b = index[m.positive], index[m.negative]
            d = D[:, col]
            votes[:, a] += d > 0
            votes[:, b] += d <= 0
            score[:, a] += d
            score[:, b] -= d
        top = votes == votes.max(axis=1, keepdims=True)
        idx = np.argmax(np.where(top, score, -np.inf), axis=1)
    out = classes[idx]
    return out[0] if single else out


@dataclass(frozen=True)
class GridRow:
    kernel: KernelKind
    C: float
    gamma: float
    train_accuracy: float
    test_accuracy: float
    fit_seconds: float
    converged: bool


@dataclass
class GridSearchResult:
    rows: list
    best: SvmConfig
    best_row: GridRow
    train_idx: np.ndarray
    test_idx: np.ndarray


def _fit_one(args):
    cfg, X_tr, y_tr, X_te, y_te = args
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        model = train_multiclass(X_tr, y_tr, cfg)
    fit_s = time.perf_counter() - t0
    converged = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
    tr_acc = float(np.mean(predict(model, X_tr) == y_tr))
    te_acc = float(np.mean(predict(model, X_te) == y_te))
    return GridRow(cfg.kernel.kind, cfg.C, cfg.kernel.gamma, tr_acc, te_acc, fit_s, converged)


def grid_configs(grid=PAPER_GRID, base: SvmConfig = SvmConfig()) -> list:
    """All configurations of ``grid`` in kernel, C, gamma order."""
    kernels = [KernelKind(k) for k in grid["kernel"]]
    out = []
    for kind, C, gamma in product(kernels, grid["C"], grid["gamma"]):
        kcfg = replace(base.kernel, kind=kind, gamma=float(gamma))
        out.append(replace(base, C=float(C), kernel=kcfg))
    if not out:
        raise ConfigError("empty parameter grid")
    return out


def grid_search(X, y, grid=PAPER_GRID, base: SvmConfig = SvmConfig(), split=None,
                test_fraction=0.25, seed=42, jobs=1) -> GridSearchResult:
    """Exhaustive search over ``C x gamma x kernel`` scored on a held-out split.

    ``split`` may be a ``(train_idx, test_idx)`` pair; otherwise a stratified
    split with ``test_fraction`` and ``seed`` is drawn. The best configuration
    has the highest test accuracy; ties prefer the simpler kernel
    (linear < rbf < poly < sigmoid), then the smaller C, then the gamma listed
    first in the grid.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=object).astype(str)
    if split is None:
        split = stratified_split(y, test_fraction, seed)
    tr, te = (np.asarray(s) for s in split)
    configs = grid_configs(grid, base)
    jobs_args = [(cfg, X[tr], y[tr], X[te], y[te]) for cfg in configs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_fit_one, jobs_args))
    else:
        rows = [_fit_one(a) for a in jobs_args]

    gamma_rank = {float(g): i for i, g in enumerate(grid["gamma"])}

    def key(pair):
        _, row = pair
        return (-row.test_accuracy, KERNEL_ORDER.index(row.kernel), row.C, gamma_rank[row.gamma])

    best_i, best_row = min(enumerate(rows), key=key)
    return GridSearchResult(rows, configs[best_i], best_row, tr, te)

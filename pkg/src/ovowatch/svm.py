"""Soft-margin binary SVM trained with sequential minimal optimisation.

The solver works on the dual

    min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K(x_i, x_j)

and picks each working pair with the maximal-violating-pair / second-order
rule. Training data is visited in a seeded random order, which fixes how ties
between equally violating pairs are broken.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _smo_core
from .features import Scaler

log = logging.getLogger(__name__)

KERNELS = ("linear", "polynomial", "quadratic", "rbf")
MAGIC = "OVOWATCH-SVM"
FORMAT_VERSION = 1


class ConvergenceWarning(UserWarning):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    sigma: float = 5.0
    degree: int = 3
    offset: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {', '.join(KERNELS)}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.kind == "quadratic" and self.degree != 2:
            object.__setattr__(self, "degree", 2)

    def describe(self) -> str:
        if self.kind == "rbf":
            return f"rbf(sigma={self.sigma:g})"
        if self.kind in ("polynomial", "quadratic"):
            return f"{self.kind}(degree={self.degree}, offset={self.offset:g})"
        return "linear"


@dataclass(frozen=True)
class TrainConfig:
    c: float = 0.15
    kkt_tolerance: float = 1e-3
    max_passes: int = 100  # iteration bound is max_passes * n_patterns
    seed: int = 0
    # per-class box constraint C * N / (2 * N_class), evening out class influence
    class_balance: bool = True
    allow_large_c: bool = False

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise ValueError("C must be positive")
        if self.c > 0.25 and not self.allow_large_c:
            raise ValueError(f"C={self.c} exceeds the 0.25 policy limit; set allow_large_c to override")
        if self.kkt_tolerance <= 0:
            raise ValueError("kkt_tolerance must be positive")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")


def box_constraints(y, cfg: TrainConfig) -> np.ndarray:
    """Per-pattern upper bound on the dual variables."""
    labels = np.asarray(y).astype(bool)
    n = len(labels)
    if not cfg.class_balance:
        return np.full(n, cfg.c)
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    return np.where(labels, cfg.c * n / (2.0 * n_pos), cfg.c * n / (2.0 * n_neg))


@dataclass
class SolverInfo:
    alpha: np.ndarray  # full dual vector, in the caller's pattern order
    box: np.ndarray  # per-pattern upper bounds used in training
    gradient: np.ndarray  # final dual gradient Q alpha - e, caller's order
    iterations: int
    converged: bool
    objective: float  # dual objective (maximisation form)
    trace: Optional[list[float]] = None


@dataclass(frozen=True, eq=False)
class SvmModel:
    kernel: KernelSpec
    support_vectors: np.ndarray
    dual_coeffs: np.ndarray  # alpha_i * y_i
    bias: float
    scaler: Scaler
    converged: bool = True
    info: Optional[SolverInfo] = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]


def _check_dims(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")


def kernel_eval(spec: KernelSpec, x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dims(x, y)
    if spec.kind == "rbf":
        diff = x - y
        return float(np.exp(-np.dot(diff, diff) / (2.0 * spec.sigma**2)))
    dot = float(np.dot(x, y))
    if spec.kind == "linear":
        return dot
    return (dot + spec.offset) ** spec.degree


def kernel_matrix(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """K(A_i, B_j) for all pairs; rows of A and B are vectors."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    _check_dims(A, B)
    if spec.kind == "rbf":
        sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
        return np.exp(-np.maximum(sq, 0.0) / (2.0 * spec.sigma**2))
    dot = A @ B.T
    if spec.kind == "linear":
        return dot
    return (dot + spec.offset) ** spec.degree


def gram_matrix(spec: KernelSpec, X) -> np.ndarray:
    """Symmetric Gram matrix; the upper triangle is mirrored so G == G.T exactly."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("gram_matrix needs at least one vector")
    G = kernel_matrix(spec, X, X)
    if spec.kind == "rbf":
        np.fill_diagonal(G, 1.0)
    iu = np.triu_indices(len(X), 1)
    G[(iu[1], iu[0])] = G[iu]
    return G


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    """Sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij."""
    v = alpha * y
    return float(alpha.sum() - 0.5 * v @ K @ v)


def _bias_from_gradient(alpha: np.ndarray, y: np.ndarray, G: np.ndarray, C: np.ndarray) -> float:
    yG = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub = float(yG[ub_mask].min()) if ub_mask.any() else np.inf
        lb = float(yG[lb_mask].max()) if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2.0
    return -rho


def train_smo(
    X,
    y,
    spec: KernelSpec,
    cfg: TrainConfig,
    scaler: Optional[Scaler] = None,
    trace: bool = False,
) -> SvmModel:
    """Fit a soft-margin SVM on already-scaled features ``X`` with boolean targets ``y``.

    ``scaler`` is the transform that produced ``X``; it is stored with the model
    so prediction can take raw features. Non-convergence within the iteration
    bound returns the best-so-far model with ``converged=False``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(y).astype(bool)
    n = len(X)
    if n != len(labels):
        raise ValueError("X and y lengths differ")
    if n < 2 or labels.all() or not labels.any():
        raise ValueError("training needs at least two patterns covering both classes")
    if scaler is None:
        scaler = Scaler.identity(X.shape[1])

    order = np.random.default_rng(cfg.seed).permutation(n)
    Xs = np.ascontiguousarray(X[order])
    ys = np.where(labels[order], 1.0, -1.0)
    box_orig = box_constraints(labels, cfg)
    C = np.ascontiguousarray(box_orig[order])
    max_iter = cfg.max_passes * max(n, 100)
    kind = {"linear": _smo_core.LINEAR, "rbf": _smo_core.RBF}.get(spec.kind, _smo_core.POLY)
    history = np.empty(max_iter + 1 if trace else 0)
    alpha, G, it, converged = _smo_core.solve(
        Xs, ys, C, kind, 1.0 / (2.0 * spec.sigma**2), int(spec.degree), float(spec.offset),
        cfg.kkt_tolerance, max_iter, history,
    )
    if not converged:
        log.warning("SMO stopped after %d iterations without reaching tolerance %g", it, cfg.kkt_tolerance)

    bias = _bias_from_gradient(alpha, ys, G, C)
    back = np.empty(n, dtype=int)
    back[order] = np.arange(n)
    alpha_orig = alpha[back]
    sv = np.flatnonzero(alpha_orig > 0)
    y_orig = np.where(labels, 1.0, -1.0)
    info = SolverInfo(
        alpha=alpha_orig,
        box=box_orig,
        gradient=G[back],
        iterations=it,
        converged=converged,
        objective=float(-0.5 * alpha @ (G - 1.0)),
        trace=history[: it + 1].tolist() if trace else None,
    )
    return SvmModel(
        kernel=spec,
        support_vectors=X[sv].copy(),
        dual_coeffs=alpha_orig[sv] * y_orig[sv],
        bias=bias,
        scaler=scaler,
        converged=converged,
        info=info,
    )


def _scaled_decision(model: SvmModel, Z: np.ndarray) -> np.ndarray:
    if len(model.dual_coeffs) == 0:
        return np.full(len(Z), model.bias)
    return kernel_matrix(model.kernel, Z, model.support_vectors) @ model.dual_coeffs + model.bias


def decision_values(model: SvmModel, X) -> np.ndarray:
    """Decision values for raw (unscaled) feature rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != len(model.scaler.mean):
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {len(model.scaler.mean)}")
    return _scaled_decision(model, model.scaler.transform(X))


def decision_value(model: SvmModel, x) -> float:
    return float(decision_values(model, np.asarray(x, dtype=float)[None, :])[0])


def predict(model: SvmModel, x) -> bool:
    return decision_value(model, x) > 0


def predict_many(model: SvmModel, X) -> np.ndarray:
    return decision_values(model, X) > 0


def kkt_violation(model: SvmModel, X, y) -> float:
    """Largest KKT violation of the stored dual solution on scaled training data.

    Margins are recomputed from the support vectors, independent of the
    solver's running gradient. Needs ``model.info``; returns the max over the
    three case conditions and the equality constraint.
    """
    if model.info is None:
        raise ValueError("model carries no solver state")
    ys = np.where(np.asarray(y).astype(bool), 1.0, -1.0)
    margins = ys * _scaled_decision(model, np.atleast_2d(np.asarray(X, dtype=float)))
    return _worst_case(model.info.alpha, model.info.box, ys, margins)


def solver_kkt_violation(model: SvmModel, y) -> float:
    """Same check as :func:`kkt_violation`, from the solver's final gradient (no kernel work)."""
    if model.info is None:
        raise ValueError("model carries no solver state")
    ys = np.where(np.asarray(y).astype(bool), 1.0, -1.0)
    # y_i f(x_i) = (Q alpha)_i + y_i b = G_i + 1 + y_i b
    margins = model.info.gradient + 1.0 + ys * model.bias
    return _worst_case(model.info.alpha, model.info.box, ys, margins)


def _worst_case(alpha: np.ndarray, c: np.ndarray, ys: np.ndarray, margins: np.ndarray) -> float:
    worst = abs(float(alpha @ ys))
    at_zero = alpha <= 0
    at_c = alpha >= c
    free = ~(at_zero | at_c)
    if at_zero.any():
        worst = max(worst, float((1.0 - margins[at_zero]).max()))
    if free.any():
        worst = max(worst, float(np.abs(margins[free] - 1.0).max()))
    if at_c.any():
        worst = max(worst, float((margins[at_c] - 1.0).max()))
    return max(worst, 0.0)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_model(model: SvmModel) -> str:
    k = model.kernel
    lines = [
        f"{MAGIC} v{FORMAT_VERSION}",
        f"kernel {k.kind} {_fmt(k.sigma)} {k.degree} {_fmt(k.offset)}",
        "scaler_mean " + " ".join(_fmt(v) for v in model.scaler.mean),
        "scaler_std " + " ".join(_fmt(v) for v in model.scaler.std),
        f"bias {_fmt(model.bias)}",
        f"converged {int(model.converged)}",
        f"n_sv {len(model.dual_coeffs)}",
    ]
    for coef, sv in zip(model.dual_coeffs, model.support_vectors):
        lines.append(" ".join([_fmt(coef)] + [_fmt(v) for v in sv]))
    return "\n".join(lines) + "\n"


def save_model(model: SvmModel, path) -> None:
    from .io_utils import atomic_write_text

    atomic_write_text(path, format_model(model))


def parse_model(text: str) -> SvmModel:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(MAGIC + " "):
        raise ModelFormatError(f"not an {MAGIC} model file (expected header '{MAGIC} v{FORMAT_VERSION}')")
    version = lines[0][len(MAGIC) + 1 :].strip()
    if version != f"v{FORMAT_VERSION}":
        raise ModelFormatError(f"unsupported model version {version!r}; this build reads v{FORMAT_VERSION}")

    def field_(idx: int, name: str) -> list[str]:
        if idx >= len(lines):
            raise ModelFormatError(f"truncated model file: missing {name!r}")
        parts = lines[idx].split()
        if not parts or parts[0] != name:
            raise ModelFormatError(f"line {idx + 1}: expected {name!r}")
        return parts[1:]

    try:
        kind, sigma, degree, offset = field_(1, "kernel")
        kernel = KernelSpec(kind, float(sigma), int(degree), float(offset))
        mean = tuple(float(v) for v in field_(2, "scaler_mean"))
        std = tuple(float(v) for v in field_(3, "scaler_std"))
        (bias_text,) = field_(4, "bias")
        bias = float(bias_text)
        (conv,) = field_(5, "converged")
        converged = bool(int(conv))
        (n_sv,) = field_(6, "n_sv")
        n = int(n_sv)
        body = lines[7:]
        if len(body) < n:
            raise ModelFormatError(f"truncated model file: {len(body)} of {n} support vectors")
        rows = np.array([[float(v) for v in line.split()] for line in body[:n]]).reshape(n, len(mean) + 1)
    except ModelFormatError:
        raise
    except ValueError as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None
    return SvmModel(
        kernel=kernel,
        support_vectors=rows[:, 1:].copy(),
        dual_coeffs=rows[:, 0].copy(),
        bias=bias,
        scaler=Scaler(mean, std),
        converged=converged,
    )


def load_model(path) -> SvmModel:
    return parse_model(Path(path).read_text(encoding="utf-8"))

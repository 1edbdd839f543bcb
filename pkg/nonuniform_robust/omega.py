"""Construction and application of the constraint transform Omega.

The feasible perturbation set is ``{delta : ||Omega delta||_p <= eps}``.
Omega is one of:

- ``identity``: the uniform ball.
- ``diagonal``: a weighted norm (Pearson, Shapley or imported importances).
- ``full``: a symmetric positive-definite matrix (Mahalanobis).
- ``mask``: the identity restricted to mutable features.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np

from . import numerics
from .errors import DimensionMismatch, EmptyMutableSet, NonInvertibleOmega, NotPositiveDefinite

OmegaKind = Literal["identity", "diagonal", "full", "mask"]
NormOrder = Union[float, int]

IMPORTANCE_FLOOR = 1e-3
INVERSE_ATOL = 1e-6


def dual_order(p: NormOrder) -> float:
    """Conjugate exponent for the supported orders (2 -> 2, inf -> 1)."""
    if p == 2:
        return 2.0
    if p == np.inf:
        return 1.0
    if p == 1:
        return np.inf
    raise ValueError(f"Unsupported norm order: {p}")


def _norm(v: np.ndarray, p: NormOrder) -> np.ndarray:
    return np.linalg.norm(v, ord=p, axis=-1)


@dataclass(frozen=True, eq=False)
class OmegaTransform:
    kind: OmegaKind
    dim: int
    source: str = ""
    weights: Optional[np.ndarray] = None
    matrix: Optional[np.ndarray] = None
    inverse_matrix: Optional[np.ndarray] = None
    mutable: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.kind == "diagonal":
            w = numerics.as_vector(self.weights, "omega weights")
            if w.shape[0] != self.dim:
                raise DimensionMismatch(self.dim, w.shape[0], "omega weights")
            if np.any(w <= 0):
                raise ValueError("diagonal omega weights must be strictly positive")
        elif self.kind == "full":
            mat = numerics.as_matrix(self.matrix, "omega matrix")
            if mat.shape != (self.dim, self.dim):
                raise DimensionMismatch(self.dim, mat.shape[0], "omega matrix")
            if self.inverse_matrix is None:
                raise NonInvertibleOmega("full omega requires its cached inverse")
            inv = numerics.as_matrix(self.inverse_matrix, "omega inverse")
            if inv.shape != mat.shape:
                raise DimensionMismatch(self.dim, inv.shape[0], "omega inverse")
            if not np.allclose(mat @ inv, np.eye(self.dim), atol=INVERSE_ATOL):
                raise NonInvertibleOmega("cached inverse does not invert the omega matrix")
        elif self.kind == "mask":
            m = np.asarray(self.mutable, dtype=bool)
            if m.shape != (self.dim,):
                raise DimensionMismatch(self.dim, m.size, "omega mask")
            if not m.any():
                raise EmptyMutableSet("A mask omega needs at least one mutable feature")
            object.__setattr__(self, "mutable", m)
        elif self.kind != "identity":
            raise ValueError(f"Unknown omega kind: {self.kind}")

    @property
    def invertible(self) -> bool:
        return self.kind != "mask"

    def apply(self, delta) -> np.ndarray:
        """``Omega @ delta`` along the last axis."""
        delta = self._check(delta)
        if self.kind == "identity":
            return delta
        if self.kind == "diagonal":
            return delta * self.weights
        if self.kind == "full":
            return delta @ self.matrix.T
        return delta * self.mutable

    def apply_inverse(self, v) -> np.ndarray:
        """``Omega^{-1} @ v`` along the last axis."""
        v = self._check(v)
        if self.kind == "identity":
            return v
        if self.kind == "diagonal":
            return v / self.weights
        if self.kind == "full":
            return v @ self.inverse_matrix.T
        raise NonInvertibleOmega("A mask omega has no inverse")

    def apply_inverse_transpose(self, v) -> np.ndarray:
        """``Omega^{-T} @ v`` along the last axis."""
        v = self._check(v)
        if self.kind == "full":
            return v @ self.inverse_matrix
        return self.apply_inverse(v)

    def restrict(self, delta) -> np.ndarray:
        """Zero the immutable coordinates (identity for non-mask kinds)."""
        delta = self._check(delta)
        if self.kind == "mask":
            return delta * self.mutable
        return delta

    def scaled(self, c: float) -> "OmegaTransform":
        """``c * Omega`` as a transform (a mask scales to a diagonal)."""
        if c <= 0:
            raise ValueError("scale must be positive")
        if self.kind == "identity":
            return OmegaTransform("diagonal", self.dim, self.source, weights=np.full(self.dim, float(c)))
        if self.kind == "diagonal":
            return OmegaTransform("diagonal", self.dim, self.source, weights=self.weights * c)
        if self.kind == "full":
            return OmegaTransform(
                "full", self.dim, self.source,
                matrix=self.matrix * c, inverse_matrix=self.inverse_matrix / c,
            )
        raise NonInvertibleOmega("Scaling a mask omega is not supported")

    def dense(self) -> np.ndarray:
        """Omega as a dense matrix."""
        return self.apply(np.eye(self.dim)).T

    def _check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.dim:
            raise DimensionMismatch(self.dim, v.shape[-1], "omega operand")
        return v

    # ── Serialization ────────────────────────────────────────────────────

    def to_dict(self) -> dict:
        payload: dict = {"kind": self.kind, "source": self.source, "dim": self.dim}
        if self.kind == "diagonal":
            payload["weights"] = self.weights.tolist()
        elif self.kind == "full":
            payload["matrix"] = self.matrix.tolist()
            payload["inverse_matrix"] = self.inverse_matrix.tolist()
        elif self.kind == "mask":
            payload["mutable"] = self.mutable.tolist()
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "OmegaTransform":
        kind = payload["kind"]
        dim = int(payload["dim"])
        source = payload.get("source", "")
        if kind == "diagonal":
            return cls(kind, dim, source, weights=np.asarray(payload["weights"], dtype=np.float64))
        if kind == "full":
            return cls(
                kind, dim, source,
                matrix=np.asarray(payload["matrix"], dtype=np.float64),
                inverse_matrix=np.asarray(payload["inverse_matrix"], dtype=np.float64),
            )
        if kind == "mask":
            return cls(kind, dim, source, mutable=np.asarray(payload["mutable"], dtype=bool))
        return cls(kind, dim, source)


# ── Builders ─────────────────────────────────────────────────────────────


def identity_omega(dim: int) -> OmegaTransform:
    return OmegaTransform("identity", dim, "identity")


def mahalanobis_omega(covariance, ridge: Optional[float] = None, source: str = "md") -> OmegaTransform:
    """``Omega = (Sigma + ridge I)^(-1/2)``; ``ridge=None`` uses the default ridge."""
    cov = numerics.as_matrix(covariance, "covariance")
    if ridge is None:
        ridge = numerics.default_ridge(cov)
    try:
        mat = numerics.sym_inv_sqrt(cov, ridge)
        inv = numerics.sym_sqrt(cov, ridge)
    except NotPositiveDefinite as e:
        raise NotPositiveDefinite(
            f"Covariance for omega '{source}' is not positive definite after ridge {ridge:.3e}",
            suggestion="Drop constant or duplicated features, or pass a larger ridge.",
        ) from e
    return OmegaTransform("full", cov.shape[0], source, matrix=mat, inverse_matrix=inv)


def importance_omega(importance, floor: float = IMPORTANCE_FLOOR, source: str = "importance") -> OmegaTransform:
    """
    Weighted-norm Omega from feature importances.

    ``entry_i = (1 / max(|s_i|, floor)) / ||1 / max(|s|, floor)||_2``, so more
    important features get a smaller weight and a larger admissible radius.
    """
    s = np.maximum(np.abs(numerics.as_vector(importance, "importance")), floor)
    inv = 1.0 / s
    return OmegaTransform("diagonal", s.shape[0], source, weights=inv / np.linalg.norm(inv))


def mask_omega(mutable) -> OmegaTransform:
    m = np.asarray(mutable, dtype=bool)
    return OmegaTransform("mask", m.shape[0], "mask", mutable=m)


def build_omega(
    kind: str,
    *,
    dim: Optional[int] = None,
    covariance=None,
    importance=None,
    mutable=None,
    ridge: Optional[float] = None,
    floor: float = IMPORTANCE_FLOOR,
) -> OmegaTransform:
    """
    Build an omega transform from a variant name and its statistics.

    Parameters
    ----------
    kind : str
        ``identity``, ``md``/``md-target``, ``pearson``/``shapley``/``import``,
        or ``mask``.
    dim : int, optional
        Required for ``identity``.
    covariance : array_like, optional
        Covariance for the md kinds.
    importance : array_like, optional
        Per-feature importance for the weighted kinds.
    mutable : array_like of bool, optional
        Mutable feature set for ``mask``.
    """
    if kind == "identity":
        if dim is None:
            raise ValueError("identity omega needs dim")
        return identity_omega(dim)
    if kind in ("md", "md-target"):
        if covariance is None:
            raise ValueError(f"{kind} omega needs a covariance")
        return mahalanobis_omega(covariance, ridge, source=kind)
    if kind in ("pearson", "shapley", "import", "importance"):
        if importance is None:
            raise ValueError(f"{kind} omega needs importances")
        return importance_omega(importance, floor, source=kind)
    if kind == "mask":
        if mutable is None:
            raise ValueError("mask omega needs a mutable set")
        return mask_omega(mutable)
    raise ValueError(f"Unknown omega kind: {kind}")


# ── Norms ────────────────────────────────────────────────────────────────


def omega_norm(o: OmegaTransform, delta, p: NormOrder = 2) -> np.ndarray:
    """``||Omega delta||_p`` along the last axis."""
    result = _norm(o.apply(delta), p)
    return float(result) if np.ndim(result) == 0 else result


def inverse_norm(o: OmegaTransform, v, q: NormOrder = 2) -> np.ndarray:
    """
    Dual norm ``||Omega^{-T} v||_q`` along the last axis.

    This is the support function ``max {v . delta : ||Omega delta||_p <= 1}``.
    For a mask it is the q-norm of ``v`` on the mutable coordinates, since
    immutable coordinates admit no perturbation.
    """
    if o.kind == "mask":
        result = _norm(o.restrict(v), q)
    else:
        result = _norm(o.apply_inverse_transpose(v), q)
    return float(result) if np.ndim(result) == 0 else result


def inscribed_epsilon(o: OmegaTransform, epsilon: float, p: NormOrder = 2) -> float:
    """
    Largest budget whose omega ball lies inside the plain p-ball of radius ``epsilon``.

    ``||delta||_p <= ||Omega^{-1}||_p ||Omega delta||_p``, so the answer is
    ``epsilon / ||Omega^{-1}||_p`` with the induced matrix norm. A mask ball
    is already inside the plain ball of the same radius.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if o.kind in ("identity", "mask"):
        return float(epsilon)
    if o.kind == "diagonal":
        return float(epsilon * np.min(o.weights))
    return float(epsilon / np.linalg.norm(o.inverse_matrix, ord=p))

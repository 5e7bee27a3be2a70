"""Sample eigenstructure, principal angles, and exact factor identities.

The sample covariance ``S = n^-1 X X^T`` is decomposed either directly
(d x d problem) or through its n x n Gram dual, which gives identical
spectra because ``X X^T`` and ``X^T X`` share nonzero eigenvalues. Both
paths return eigenvalue/eigenvector pairs plus the dual score vectors and
obey one retention rule, so results are interchangeable.

Angles are always reported in degrees. The exact-identity helpers check
the finite-sample relations that tie the sample eigenstructure back to the
standardized factor Z that generated the data; they hold to machine
precision on every draw, independent of any asymptotics, and are the
backbone of the verification tooling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DENSE_LIMIT, SpikeModel, full_basis

# Pairs with eigenvalue at or below lh_1 * RETENTION_REL are dropped; their
# eigenvectors and score vectors are numerically meaningless.
RETENTION_REL = 1e-12

_UNIT_NORM_RTOL = 1e-6
_ORTHONORMAL_ATOL = 1e-8


@dataclass(frozen=True, eq=False)
class EigenResult:
    """Retained sample eigenstructure, descending eigenvalue order.

    ``eigenvalues`` has shape (k,), ``eigenvectors`` (d, k) with
    orthonormal columns, ``score_vectors`` (n, k) with the dual unit
    vectors; ``method`` records which path produced it ("direct" or
    "gram"). Columns are sign-fixed so each eigenvector's
    largest-magnitude coordinate is positive, and score vectors flip with
    their eigenvector so ``n^-1/2 X = sum_j sqrt(lh_j) u_j v_j^T`` is
    preserved.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    score_vectors: np.ndarray
    method: str


@dataclass(frozen=True, eq=False)
class AngleReport:
    """Per-index angle diagnostics against the population structure.

    ``indices`` are 1-based sample eigenvector indices; ``tiers`` gives
    each index's tier number (noise indices get tier r+1).
    ``vector_angles_deg[i]`` is the angle to the matching population
    eigenvector, ``subspace_angles_deg[i]`` the angle to the matching
    population eigenspace block, and ``inner_products[i]`` the absolute
    inner product with the matching population eigenvector.
    """

    indices: tuple[int, ...]
    tiers: tuple[int, ...]
    vector_angles_deg: np.ndarray
    subspace_angles_deg: np.ndarray
    inner_products: np.ndarray


def _finalize(
    w: np.ndarray, u: np.ndarray, v: np.ndarray, method: str
) -> EigenResult:
    """Apply the retention rule and the sign convention."""
    w = np.where(w < 0, 0.0, w)
    if w.size == 0 or w[0] <= 0.0:
        d = u.shape[0]
        n = v.shape[0]
        return EigenResult(
            eigenvalues=np.empty(0),
            eigenvectors=np.empty((d, 0)),
            score_vectors=np.empty((n, 0)),
            method=method,
        )
    keep = w > w[0] * RETENTION_REL
    w, u, v = w[keep], u[:, keep], v[:, keep]
    peaks = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[peaks, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return EigenResult(
        eigenvalues=w,
        eigenvectors=u * signs,
        score_vectors=v * signs,
        method=method,
    )


def _maybe_center(x: np.ndarray, center: bool) -> np.ndarray:
    if not center:
        return x
    if x.shape[1] < 2:
        raise ValueError("centering requires at least 2 observations")
    return x - x.mean(axis=1, keepdims=True)


def sample_eigen(data, center: bool = False) -> EigenResult:
    """Eigenstructure of the sample covariance ``n^-1 X X^T``.

    Dispatches to the direct d x d decomposition when ``d <= n`` or
    ``d <= 2000``, otherwise to the Gram dual path, which never forms a
    d x d matrix. ``center=True`` subtracts the per-coordinate mean first.
    """
    x = _maybe_center(np.asarray(data.columns, dtype=float), center)
    d, n = x.shape
    if d <= n or d <= DENSE_LIMIT:
        return _direct_eigen(x, n)
    return _gram_eigen(x, n)


def _direct_eigen(x: np.ndarray, n: int) -> EigenResult:
    d = x.shape[0]
    s = (x @ x.T) / n
    w, u = np.linalg.eigh(s)
    order = np.argsort(w)[::-1][: min(n, d)]
    w, u = w[order], u[:, order]
    w = np.where(w < 0, 0.0, w)
    if w.size and w[0] > 0:
        keep = w > w[0] * RETENTION_REL
        w, u = w[keep], u[:, keep]
        v = (x.T @ u) / np.sqrt(n * w)
    else:
        w = np.empty(0)
        u = np.empty((d, 0))
        v = np.empty((x.shape[1], 0))
    return _finalize(w, u, v, "direct")


def gram_eigen(data, center: bool = False) -> EigenResult:
    """Gram dual eigenstructure, usable for any shape.

    Decomposes the n x n matrix ``n^-1 X^T X`` and lifts its eigenvectors
    back to coordinate space via ``u_j = X v_j / sqrt(n lh_j)``, so cost
    scales with n rather than d.
    """
    x = _maybe_center(np.asarray(data.columns, dtype=float), center)
    return _gram_eigen(x, x.shape[1])


def _gram_eigen(x: np.ndarray, n: int) -> EigenResult:
    g = (x.T @ x) / n
    w, v = np.linalg.eigh(g)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    w = np.where(w < 0, 0.0, w)
    if w.size and w[0] > 0:
        keep = w > w[0] * RETENTION_REL
        w, v = w[keep], v[:, keep]
        u = (x @ v) / np.sqrt(n * w)
    else:
        w = np.empty(0)
        u = np.empty((x.shape[0], 0))
        v = np.empty((n, 0))
    return _finalize(w, u, v, "gram")


def _check_unit(vec: np.ndarray, name: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=float).ravel()
    norm = np.linalg.norm(vec)
    if abs(norm - 1.0) > _UNIT_NORM_RTOL:
        raise ValueError(f"{name} must be unit-norm, got norm {norm}")
    return vec


def angle_between(v: np.ndarray, u: np.ndarray) -> float:
    """Principal angle in degrees between two unit vectors, in [0, 90]."""
    v = _check_unit(v, "v")
    u = _check_unit(u, "u")
    if v.shape != u.shape:
        raise ValueError(f"shape mismatch: {v.shape} vs {u.shape}")
    cos = min(1.0, abs(float(v @ u)))
    return float(np.degrees(np.arccos(cos)))


def angle_to_subspace(v: np.ndarray, basis: np.ndarray) -> float:
    """Angle in degrees between a unit vector and the span of ``basis``.

    ``basis`` is d x q with orthonormal columns (checked to 1e-8); the
    angle is ``arccos ||basis^T v||``, in [0, 90].
    """
    v = _check_unit(v, "v")
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 2 or basis.shape[0] != v.shape[0]:
        raise ValueError(f"basis shape {basis.shape} incompatible with vector length {v.shape[0]}")
    gram_err = np.max(np.abs(basis.T @ basis - np.eye(basis.shape[1])))
    if gram_err > _ORTHONORMAL_ATOL:
        raise ValueError(f"basis columns are not orthonormal (max residual {gram_err:.3g})")
    cos = min(1.0, float(np.linalg.norm(basis.T @ v)))
    return float(np.degrees(np.arccos(cos)))


def pairwise_angles(vectors: np.ndarray) -> np.ndarray:
    """Symmetric matrix of pairwise angles (degrees) between unit columns.

    ``vectors`` is d x k; entry (a, b) is the angle between columns a and
    b, with an exactly zero diagonal.
    """
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2:
        raise ValueError("vectors must be a d x k matrix of column vectors")
    norms = np.linalg.norm(vectors, axis=0)
    if np.any(np.abs(norms - 1.0) > _UNIT_NORM_RTOL):
        raise ValueError("all columns must be unit-norm")
    cos = np.clip(np.abs(vectors.T @ vectors), 0.0, 1.0)
    angles = np.degrees(np.arccos(cos))
    np.fill_diagonal(angles, 0.0)
    return angles


def angle_report(
    model: SpikeModel,
    result: EigenResult,
    monitored_noise: int = 0,
    merge_spike_tiers: bool = False,
) -> AngleReport:
    """Angles of the leading sample eigenvectors to their population targets.

    Covers spike indices 1..m plus the first ``monitored_noise`` noise
    indices. Spike index j is compared against population eigenvector j
    and against its tier's eigenspace block; noise indices are compared
    against the noise eigenspace. ``merge_spike_tiers=True`` compares every
    spike against the span of all m spike directions instead of its own
    tier block, which is the reference subspace in the fixed-n regime.

    With the identity basis the computation reduces to coordinate sums of
    squared eigenvector entries, so no d x d basis is formed.
    """
    m = model.m
    if monitored_noise < 0:
        raise ValueError("monitored_noise must be nonnegative")
    total = m + monitored_noise
    if total > result.eigenvalues.size:
        raise ValueError(
            f"requested {total} indices but only {result.eigenvalues.size} pairs were retained"
        )
    tier_by_index = model.spike_tier_numbers()
    # 0-based coordinate block boundaries per tier
    starts = np.cumsum([0] + [t.multiplicity for t in model.tiers])
    u = full_basis(model)

    indices: list[int] = []
    tiers: list[int] = []
    vec_cos: list[float] = []
    sub_cos: list[float] = []
    for j in range(1, total + 1):
        col = result.eigenvectors[:, j - 1]
        if j <= m:
            tier = int(tier_by_index[j - 1])
            if merge_spike_tiers:
                lo, hi = 0, m
            else:
                lo, hi = int(starts[tier - 1]), int(starts[tier])
        else:
            tier = model.r + 1
            lo, hi = m, model.d
        if u is None:
            cv = abs(float(col[j - 1]))
            if j <= m:
                cs = float(np.sqrt(np.sum(col[lo:hi] ** 2)))
            else:
                cs = float(np.sqrt(max(0.0, 1.0 - np.sum(col[:m] ** 2))))
        else:
            cv = abs(float(u[:, j - 1] @ col))
            cs = float(np.linalg.norm(u[:, lo:hi].T @ col))
        indices.append(j)
        tiers.append(tier)
        vec_cos.append(min(1.0, cv))
        sub_cos.append(min(1.0, cs))

    return AngleReport(
        indices=tuple(indices),
        tiers=tuple(tiers),
        vector_angles_deg=np.degrees(np.arccos(np.array(vec_cos))),
        subspace_angles_deg=np.degrees(np.arccos(np.array(sub_cos))),
        inner_products=np.array(vec_cos),
    )


def population_scores(model: SpikeModel, data) -> np.ndarray:
    """Population PC scores ``S[i, j] = u_j^T (X_i - mean) / sqrt(lam_j)``, shape (n, m).

    For data generated by :func:`spikelab.sampling.sample_data` these equal
    the first m columns of the standardized factor Z exactly.
    """
    x = np.asarray(data.columns, dtype=float)
    if x.shape[0] != model.d:
        raise ValueError(f"data dimension {x.shape[0]} does not match model d={model.d}")
    if model.mean is not None:
        x = x - model.mean[:, None]
    lam = model.spike_eigenvalues()
    u = full_basis(model)
    if u is None:
        proj = x[: model.m]
    else:
        proj = u[:, : model.m].T @ x
    return (proj / np.sqrt(lam)[:, None]).T


# Population score magnitudes below this are flagged rather than divided.
SCORE_FLOOR = 1e-8


def score_ratios(result: EigenResult, pop_scores: np.ndarray) -> np.ndarray:
    """Ratios ``|sqrt(n) v_hat[i, j] / S[i, j]|`` per observation and spike.

    Sample scores are the rescaled dual vectors ``sqrt(n) v_hat_j``, each
    sign-aligned to its population column before dividing. Entries with
    ``|S[i, j]|`` below ``SCORE_FLOOR`` come back NaN (flagged, not
    divided). Shape (n, m).
    """
    pop = np.asarray(pop_scores, dtype=float)
    if pop.ndim != 2:
        raise ValueError("population scores must be an (n, m) matrix")
    n, m = pop.shape
    if result.score_vectors.shape[0] != n:
        raise ValueError(
            f"score vectors cover {result.score_vectors.shape[0]} observations, expected {n}"
        )
    if result.score_vectors.shape[1] < m:
        raise ValueError(
            f"only {result.score_vectors.shape[1]} retained pairs for {m} spike columns"
        )
    sample = np.sqrt(n) * result.score_vectors[:, :m].copy()
    align = np.sign(np.sum(sample * pop, axis=0))
    align[align == 0] = 1.0
    sample *= align
    ratios = np.full((n, m), np.nan)
    ok = np.abs(pop) >= SCORE_FLOOR
    ratios[ok] = np.abs(sample[ok] / pop[ok])
    return ratios


def exact_identity_residuals(
    model: SpikeModel,
    z,
    result: EigenResult,
    include_factor: bool = False,
    include_orthonormality: bool = False,
    block_rows: int = 1024,
) -> dict[str, float]:
    """Residuals of the exact finite-sample identities on one draw.

    Relates the retained eigenstructure of uncentered identity-basis data
    back to the standardized factor Z that generated it. Always computed:

    - ``rowwise``: max over coordinates k of
      ``|sum_j lh_j u[k,j]^2 / lam_k - n^-1 sum_i Z[i,k]^2|``.
    - ``trace``: relative error of ``sum_j lh_j`` against
      ``n^-1 ||X||_F^2``.
    - ``bound``: max over j of ``lh_j u[j,j]^2 - lam_j n^-1 sum_i Z[i,j]^2``
      (positive values violate the per-index bound).

    With ``include_factor``, the whitened factor
    ``W = diag(lam)^-1/2 U_hat diag(lh)^1/2`` is compared against Z through
    ``W W^T = n^-1 Z^T Z``: ``factor_max`` is the elementwise residual and
    ``factor_frobenius`` the relative Frobenius residual, both evaluated in
    row blocks so the d x d matrices are never materialized whole. With
    ``include_orthonormality``, ``orthonormality`` is
    ``max |U_hat^T U_hat - I|`` over retained columns.
    """
    if model.basis.kind != "identity":
        raise ValueError("exact identities require the identity basis")
    if model.mean is not None:
        raise ValueError("exact identities require a mean-zero model")
    zmat = np.asarray(z.entries, dtype=float)
    n, d = zmat.shape
    if (n, d) != (model.n, model.d):
        raise ValueError(f"Z shape {zmat.shape} does not match model ({model.n}, {model.d})")

    w = result.eigenvalues
    u = result.eigenvectors
    k = w.size
    m = model.m
    lam_spike = model.spike_eigenvalues()
    lam_all = np.ones(d)
    lam_all[:m] = lam_spike
    col_means = (zmat**2).sum(axis=0) / n

    rowwise = float(np.max(np.abs((u**2) @ w / lam_all - col_means)))
    traced = float(col_means @ lam_all)
    trace_resid = abs(float(w.sum()) - traced) / max(1.0, traced)
    diag_u = u[np.arange(k), np.arange(k)]
    bound = float(np.max(w * diag_u**2 - lam_all[:k] * col_means[:k]))

    out = {"rowwise": rowwise, "trace": trace_resid, "bound": bound}

    if include_orthonormality:
        gram = u.T @ u
        out["orthonormality"] = float(np.max(np.abs(gram - np.eye(k))))

    if include_factor:
        wf = u * np.sqrt(w) / np.sqrt(lam_all)[:, None]
        max_resid = 0.0
        diff_sq = 0.0
        ref_sq = 0.0
        for lo in range(0, d, block_rows):
            hi = min(lo + block_rows, d)
            lhs = wf[lo:hi] @ wf.T
            rhs = (zmat[:, lo:hi].T @ zmat) / n
            diff = lhs - rhs
            max_resid = max(max_resid, float(np.max(np.abs(diff))))
            diff_sq += float(np.sum(diff**2))
            ref_sq += float(np.sum(rhs**2))
        out["factor_max"] = max_resid
        out["factor_frobenius"] = float(np.sqrt(diff_sq / ref_sq)) if ref_sq > 0 else 0.0

    return out

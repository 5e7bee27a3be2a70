"""Seeded replication harness, aggregation, KDE, and verification.

A run executes independent replications of sample → decompose → measure,
one counter-based stream per replication, and collects per-replication
rows for the monitored indices: spikes 1..m plus the first few noise
indices. The ``eigenvalue_ratio`` field holds ``lh_j / lam_j`` for spike
rows and the scaled ``n lh_j / (d lam_j)`` for noise rows, so every row's
value is the quantity whose theoretical limit is tabulated.

Aggregates are pure functions of the per-replication rows, worker count
never changes results (rows are keyed by stream and sorted), and the CSV
writers emit deterministic bytes so equal seeds give equal files.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import eigen as _eigen
from .limits import HdlssLimitSample, LimitPrediction, predict
from .model import SpikeModel, build_model, full_basis
from .sampling import sample_data, sample_z

THREADS_ENV = "SPIKELAB_THREADS"

NOISE_METRIC = "eigenvalue_scale"
SPIKE_METRIC = "eigenvalue_ratio"


@dataclass(frozen=True)
class ReplicationRow:
    """One monitored index in one replication."""

    stream_id: int
    index: int
    tier: int
    eigenvalue_ratio: float
    angle_vector_deg: float
    angle_subspace_deg: float


@dataclass(frozen=True)
class AggregateRow:
    """Mean/median/std of one metric for one monitored index."""

    index: int
    tier: int
    metric: str
    mean: float
    median: float
    std: float


@dataclass(frozen=True)
class PairwiseRow:
    """Pairwise-angle statistics across replications of one spike index.

    Angles are measured between the replications' within-cone components:
    each replicated eigenvector with its population eigenspace block
    projected out, renormalized. These directions are asymptotically
    uniform on the noise sphere, so the angles concentrate at 90 degrees;
    the raw vectors themselves would instead concentrate at
    ``arccos(1/(1+c))``, which carries no information beyond the cone
    aperture already reported per replication.
    """

    index: int
    mean_pairwise_deg: float
    std_pairwise_deg: float


@dataclass(frozen=True, eq=False)
class MonteCarloSummary:
    """Everything a replication run produced."""

    model: SpikeModel
    reps: int
    seed: int
    monitored_noise: int
    merge_spike_tiers: bool
    rows: tuple[ReplicationRow, ...]
    spike_vectors: np.ndarray
    identity_residuals: tuple[dict, ...]
    failures: tuple[tuple[int, str], ...]


@dataclass(frozen=True)
class Tolerances:
    """Verification tolerances; defaults match the documented targets."""

    ratio_rel: float = 0.05
    angle_deg: float = 2.0
    noise_scale_rel: float = 0.05
    noise_vector_min_deg: float = 80.0
    noise_subspace_max_deg: float = 10.0
    boundary_consistent_max_deg: float = 10.0
    boundary_inconsistent_min_deg: float = 84.0
    pairwise_dev_deg: float = 2.0
    hdlss_mean_rel: float = 0.02
    hdlss_var_rel: float = 0.15
    hdlss_angle_deg: float = 2.0


@dataclass(frozen=True)
class CriterionRow:
    """One verified comparison. ``mode`` is how observed meets predicted:
    'abs' (|obs - pred| <= tol), 'rel' (relative), 'max' (obs <= tol),
    or 'min' (obs >= tol)."""

    index: int | None
    tier: int | None
    metric: str
    observed: float
    predicted: float
    tolerance: float
    mode: str
    passed: bool


@dataclass(frozen=True)
class VerificationReport:
    """All criteria for one run; ``passed`` is their conjunction."""

    criteria: tuple[CriterionRow, ...]
    passed: bool

    def to_json_dict(self) -> dict:
        def _num(x: float) -> object:
            if isinstance(x, float) and math.isinf(x):
                return "inf"
            if isinstance(x, float) and math.isnan(x):
                return "nan"
            return x

        return {
            "passed": self.passed,
            "criteria": [
                {
                    "index": c.index,
                    "tier": c.tier,
                    "metric": c.metric,
                    "observed": _num(c.observed),
                    "predicted": _num(c.predicted),
                    "tolerance": c.tolerance,
                    "mode": c.mode,
                    "passed": c.passed,
                }
                for c in self.criteria
            ],
        }


@dataclass(frozen=True, eq=False)
class DensityCurve:
    """Gaussian-kernel density estimate, or a point mass for degenerate
    samples (``point_mass`` set, empty grid)."""

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    point_mass: float | None = None


@dataclass(frozen=True)
class IdentityReport:
    """Exact-identity residuals for one seeded draw."""

    n: int
    d: int
    seed: int
    residuals: Mapping[str, float]
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class SweepRow:
    """Convergence measurement for one spike index at one sweep point."""

    n: int
    d: int
    index: int
    tier: int
    c: float
    eigenvalue: float
    ratio_limit: float
    mean_ratio: float
    angle_limit_deg: float
    mean_angle_deg: float
    mean_abs_angle_dev_deg: float
    angle_metric: str


@dataclass(frozen=True)
class ConvergenceTable:
    """Sweep results over increasing n at fixed d/n."""

    d_over_n: float
    reps: int
    seed: int
    rows: tuple[SweepRow, ...]


def resolve_threads(threads: int | None) -> int:
    """Worker count: explicit argument, then the environment, then CPU count."""
    if threads is not None:
        if threads < 1:
            raise ValueError(f"threads must be positive, got {threads}")
        return int(threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
        if value < 1:
            raise ValueError(f"{THREADS_ENV} must be positive, got {value}")
        return value
    return os.cpu_count() or 1


def _replicate(
    model: SpikeModel,
    seed: int,
    stream_id: int,
    monitored_noise: int,
    merge_spike_tiers: bool,
    want_residuals: bool,
):
    z = sample_z(model.n, model.d, seed, stream_id)
    data = sample_data(model, z)
    result = _eigen.sample_eigen(data)
    m = model.m
    retained = result.eigenvalues.size
    if retained < m:
        raise RuntimeError(f"only {retained} pairs retained for {m} spikes")
    noise_count = min(monitored_noise, retained - m)
    report = _eigen.angle_report(
        model, result, monitored_noise=noise_count, merge_spike_tiers=merge_spike_tiers
    )
    lam = model.spike_eigenvalues()
    rows = []
    for pos, j in enumerate(report.indices):
        if j <= m:
            ratio = float(result.eigenvalues[j - 1] / lam[j - 1])
        else:
            ratio = float(model.n * result.eigenvalues[j - 1] / model.d)
        rows.append(
            ReplicationRow(
                stream_id=stream_id,
                index=j,
                tier=report.tiers[pos],
                eigenvalue_ratio=ratio,
                angle_vector_deg=float(report.vector_angles_deg[pos]),
                angle_subspace_deg=float(report.subspace_angles_deg[pos]),
            )
        )
    residuals = None
    if want_residuals:
        res = _eigen.exact_identity_residuals(model, z, result)
        residuals = {"stream_id": stream_id, **res}
    return rows, residuals, result.eigenvectors[:, :m].copy()


def run_replications(
    model: SpikeModel,
    reps: int,
    seed: int,
    *,
    monitored_noise: int = 3,
    threads: int | None = None,
    merge_spike_tiers: bool = False,
) -> MonteCarloSummary:
    """Run ``reps`` independent replications and collect monitored rows.

    Replication r consumes the stream ``(seed, stream_id=r)``; results are
    identical for any worker count. Exact-identity residuals are recorded
    per replication when the model is identity-basis and mean-zero. A run
    aborts if more than 1% of replications raise.
    """
    if not isinstance(reps, (int, np.integer)) or reps < 1:
        raise ValueError(f"reps must be a positive integer, got {reps!r}")
    if monitored_noise < 0:
        raise ValueError("monitored_noise must be nonnegative")
    workers = resolve_threads(threads)
    want_residuals = model.basis.kind == "identity" and model.mean is None

    results: dict[int, tuple] = {}
    failures: list[tuple[int, str]] = []

    def _task(r: int):
        return _replicate(model, seed, r, monitored_noise, merge_spike_tiers, want_residuals)

    if workers == 1:
        for r in range(reps):
            try:
                results[r] = _task(r)
            except Exception as exc:  # noqa: BLE001 - recorded and re-raised below threshold
                failures.append((r, str(exc)))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_task, r): r for r in range(reps)}
            for fut, r in futures.items():
                try:
                    results[r] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    failures.append((r, str(exc)))

    if len(failures) > 0.01 * reps:
        sample_failure = failures[0]
        raise RuntimeError(
            f"{len(failures)} of {reps} replications failed; "
            f"first failure (stream {sample_failure[0]}): {sample_failure[1]}"
        )

    rows: list[ReplicationRow] = []
    residual_rows: list[dict] = []
    kept_streams = sorted(results)
    vectors = np.empty((len(kept_streams), model.d, model.m))
    for pos, r in enumerate(kept_streams):
        rep_rows, resid, spike_cols = results[r]
        rows.extend(rep_rows)
        if resid is not None:
            residual_rows.append(resid)
        vectors[pos] = spike_cols
    rows.sort(key=lambda row: (row.stream_id, row.index))
    failures.sort()

    return MonteCarloSummary(
        model=model,
        reps=reps,
        seed=int(seed),
        monitored_noise=monitored_noise,
        merge_spike_tiers=merge_spike_tiers,
        rows=tuple(rows),
        spike_vectors=vectors,
        identity_residuals=tuple(residual_rows),
        failures=tuple(failures),
    )


def _metric_values(summary: MonteCarloSummary) -> dict[tuple[int, int, str], np.ndarray]:
    """Replication values grouped by (index, tier, metric)."""
    m = summary.model.m
    groups: dict[tuple[int, int, str], list[float]] = {}
    for row in summary.rows:
        ratio_metric = SPIKE_METRIC if row.index <= m else NOISE_METRIC
        for metric, value in (
            (ratio_metric, row.eigenvalue_ratio),
            ("angle_vector_deg", row.angle_vector_deg),
            ("angle_subspace_deg", row.angle_subspace_deg),
        ):
            groups.setdefault((row.index, row.tier, metric), []).append(value)
    return {key: np.asarray(vals) for key, vals in groups.items()}


def aggregate(summary: MonteCarloSummary) -> list[AggregateRow]:
    """Mean/median/std per monitored index and metric, recomputable from rows."""
    out = []
    for (index, tier, metric), vals in sorted(_metric_values(summary).items()):
        std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
        out.append(
            AggregateRow(
                index=index,
                tier=tier,
                metric=metric,
                mean=float(np.mean(vals)),
                median=float(np.median(vals)),
                std=std,
            )
        )
    return out


def pairwise_stats(summary: MonteCarloSummary) -> list[PairwiseRow]:
    """Mean/std of within-cone pairwise angles per spike index.

    For index j the population eigenspace block of j's tier (or the span
    of all spikes when the run merged tiers) is projected out of each
    replicated eigenvector; the remaining components are renormalized and
    compared pairwise. See :class:`PairwiseRow`.
    """
    model = summary.model
    out = []
    reps = summary.spike_vectors.shape[0]
    starts = np.cumsum([0] + [t.multiplicity for t in model.tiers])
    tiers = model.spike_tier_numbers()
    u = full_basis(model)
    for j in range(model.m):
        if reps < 2:
            out.append(PairwiseRow(index=j + 1, mean_pairwise_deg=math.nan, std_pairwise_deg=math.nan))
            continue
        if summary.merge_spike_tiers:
            lo, hi = 0, model.m
        else:
            tier = int(tiers[j])
            lo, hi = int(starts[tier - 1]), int(starts[tier])
        vecs = summary.spike_vectors[:, :, j]
        if u is None:
            comps = vecs.copy()
            comps[:, lo:hi] = 0.0
        else:
            block = u[:, lo:hi]
            comps = vecs - (vecs @ block) @ block.T
        norms = np.linalg.norm(comps, axis=1)
        if np.any(norms < 1e-12):
            raise ValueError(
                f"index {j + 1}: a replicated eigenvector lies entirely in its "
                "population eigenspace, so its within-cone direction is undefined"
            )
        comps /= norms[:, None]
        angles = _eigen.pairwise_angles(comps.T)
        upper = angles[np.triu_indices(reps, k=1)]
        out.append(
            PairwiseRow(
                index=j + 1,
                mean_pairwise_deg=float(np.mean(upper)),
                std_pairwise_deg=float(np.std(upper, ddof=1)) if upper.size > 1 else 0.0,
            )
        )
    return out


def kde(samples: Sequence[float] | np.ndarray, bandwidth: float | None = None) -> DensityCurve:
    """Gaussian-kernel density on a 512-point grid.

    Bandwidth defaults to ``0.9 * min(sd, IQR/1.34) * N^(-1/5)``, falling
    back to the sd alone when the IQR degenerates. A zero-variance sample
    returns a point-mass curve instead.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("kde requires at least one sample")
    if not np.all(np.isfinite(s)):
        raise ValueError("kde samples must be finite")
    sd = float(np.std(s, ddof=1)) if s.size > 1 else 0.0
    if sd == 0.0:
        return DensityCurve(
            grid=np.empty(0), density=np.empty(0), bandwidth=0.0, point_mass=float(s[0])
        )
    if bandwidth is None:
        q75, q25 = np.percentile(s, [75.0, 25.0])
        iqr = float(q75 - q25)
        spread = min(sd, iqr / 1.34) if iqr > 0 else sd
        bandwidth = 0.9 * spread * s.size ** (-0.2)
    else:
        bandwidth = float(bandwidth)
        if not bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    h = bandwidth
    grid = np.linspace(float(s.min()) - 3 * h, float(s.max()) + 3 * h, 512)
    density = np.zeros(512)
    for lo in range(0, s.size, 8192):
        chunk = s[lo : lo + 8192]
        density += np.exp(-0.5 * ((grid[:, None] - chunk[None, :]) / h) ** 2).sum(axis=1)
    density /= s.size * h * math.sqrt(2.0 * math.pi)
    return DensityCurve(grid=grid, density=density, bandwidth=h, point_mass=None)


def _mean_of(groups, index: int, tier: int, metric: str) -> float | None:
    vals = groups.get((index, tier, metric))
    return None if vals is None else float(np.mean(vals))


def _verify_deterministic(
    summary: MonteCarloSummary, prediction: LimitPrediction, tol: Tolerances
) -> list[CriterionRow]:
    groups = _metric_values(summary)
    model = summary.model
    rows: list[CriterionRow] = []

    mult_by_tier = {k + 1: t.multiplicity for k, t in enumerate(model.tiers)}
    for s in prediction.spikes:
        ratio_mean = _mean_of(groups, s.index, s.tier, SPIKE_METRIC)
        if ratio_mean is None:
            continue
        if math.isfinite(s.ratio_limit):
            rows.append(
                CriterionRow(
                    index=s.index,
                    tier=s.tier,
                    metric=SPIKE_METRIC,
                    observed=ratio_mean,
                    predicted=s.ratio_limit,
                    tolerance=tol.ratio_rel,
                    mode="rel",
                    passed=abs(ratio_mean - s.ratio_limit) <= tol.ratio_rel * s.ratio_limit,
                )
            )
        if s.c == 0.0:
            obs = _mean_of(groups, s.index, s.tier, "angle_vector_deg")
            rows.append(
                CriterionRow(
                    index=s.index,
                    tier=s.tier,
                    metric="angle_vector_deg",
                    observed=obs,
                    predicted=0.0,
                    tolerance=tol.boundary_consistent_max_deg,
                    mode="max",
                    passed=obs <= tol.boundary_consistent_max_deg,
                )
            )
        elif math.isinf(s.c):
            obs = _mean_of(groups, s.index, s.tier, "angle_vector_deg")
            rows.append(
                CriterionRow(
                    index=s.index,
                    tier=s.tier,
                    metric="angle_vector_deg",
                    observed=obs,
                    predicted=90.0,
                    tolerance=tol.boundary_inconsistent_min_deg,
                    mode="min",
                    passed=obs >= tol.boundary_inconsistent_min_deg,
                )
            )
        else:
            metric = (
                "angle_vector_deg" if mult_by_tier.get(s.tier, 1) == 1 else "angle_subspace_deg"
            )
            obs = _mean_of(groups, s.index, s.tier, metric)
            rows.append(
                CriterionRow(
                    index=s.index,
                    tier=s.tier,
                    metric=metric,
                    observed=obs,
                    predicted=s.angle_limit_deg,
                    tolerance=tol.angle_deg,
                    mode="abs",
                    passed=abs(obs - s.angle_limit_deg) <= tol.angle_deg,
                )
            )

    noise_tier = model.r + 1
    noise_indices = sorted({idx for (idx, tier, _met) in groups if tier == noise_tier})
    for idx in noise_indices:
        scale = _mean_of(groups, idx, noise_tier, NOISE_METRIC)
        rows.append(
            CriterionRow(
                index=idx,
                tier=noise_tier,
                metric=NOISE_METRIC,
                observed=scale,
                predicted=prediction.noise.eigenvalue_scale_limit,
                tolerance=tol.noise_scale_rel,
                mode="rel",
                passed=abs(scale - prediction.noise.eigenvalue_scale_limit)
                <= tol.noise_scale_rel * prediction.noise.eigenvalue_scale_limit,
            )
        )
        vec = _mean_of(groups, idx, noise_tier, "angle_vector_deg")
        rows.append(
            CriterionRow(
                index=idx,
                tier=noise_tier,
                metric="angle_vector_deg",
                observed=vec,
                predicted=90.0,
                tolerance=tol.noise_vector_min_deg,
                mode="min",
                passed=vec >= tol.noise_vector_min_deg,
            )
        )
        sub = _mean_of(groups, idx, noise_tier, "angle_subspace_deg")
        rows.append(
            CriterionRow(
                index=idx,
                tier=noise_tier,
                metric="angle_subspace_deg",
                observed=sub,
                predicted=prediction.noise.subspace_angle_limit_deg,
                tolerance=tol.noise_subspace_max_deg,
                mode="max",
                passed=sub <= tol.noise_subspace_max_deg,
            )
        )

    if summary.reps >= 2:
        for pw in pairwise_stats(summary):
            rows.append(
                CriterionRow(
                    index=pw.index,
                    tier=int(model.spike_tier_numbers()[pw.index - 1]),
                    metric="pairwise_angle_deg",
                    observed=pw.mean_pairwise_deg,
                    predicted=90.0,
                    tolerance=tol.pairwise_dev_deg,
                    mode="abs",
                    passed=abs(pw.mean_pairwise_deg - 90.0) <= tol.pairwise_dev_deg,
                )
            )
    return rows


def _verify_hdlss(
    summary: MonteCarloSummary, draws: HdlssLimitSample, tol: Tolerances
) -> list[CriterionRow]:
    model = summary.model
    m = model.m
    if m > 1 and not summary.merge_spike_tiers:
        raise ValueError(
            "fixed-n verification with several spikes needs a run with merge_spike_tiers=True"
        )
    groups = _metric_values(summary)
    tiers = model.spike_tier_numbers()
    angle_metric = "angle_vector_deg" if m == 1 else "angle_subspace_deg"
    rows: list[CriterionRow] = []
    for j in range(1, m + 1):
        tier = int(tiers[j - 1])
        sim_ratio = groups[(j, tier, SPIKE_METRIC)]
        ref_ratio = draws.ratio_draws[:, j - 1]
        ref_mean = float(np.mean(ref_ratio))
        ref_var = float(np.var(ref_ratio, ddof=1))
        sim_mean = float(np.mean(sim_ratio))
        sim_var = float(np.var(sim_ratio, ddof=1))
        rows.append(
            CriterionRow(
                index=j,
                tier=tier,
                metric="eigenvalue_ratio_mean",
                observed=sim_mean,
                predicted=ref_mean,
                tolerance=tol.hdlss_mean_rel,
                mode="rel",
                passed=abs(sim_mean - ref_mean) <= tol.hdlss_mean_rel * abs(ref_mean),
            )
        )
        rows.append(
            CriterionRow(
                index=j,
                tier=tier,
                metric="eigenvalue_ratio_var",
                observed=sim_var,
                predicted=ref_var,
                tolerance=tol.hdlss_var_rel,
                mode="rel",
                passed=abs(sim_var - ref_var) <= tol.hdlss_var_rel * abs(ref_var),
            )
        )
        sim_angle = float(np.mean(groups[(j, tier, angle_metric)]))
        ref_angle = float(np.mean(draws.angle_draws_deg[:, j - 1]))
        rows.append(
            CriterionRow(
                index=j,
                tier=tier,
                metric=angle_metric + "_mean",
                observed=sim_angle,
                predicted=ref_angle,
                tolerance=tol.hdlss_angle_deg,
                mode="abs",
                passed=abs(sim_angle - ref_angle) <= tol.hdlss_angle_deg,
            )
        )
    return rows


def verify(
    summary: MonteCarloSummary,
    prediction: LimitPrediction | HdlssLimitSample,
    tolerances: Tolerances | None = None,
) -> VerificationReport:
    """Compare a replication summary against its theoretical limits.

    Deterministic predictions check mean ratios (relative), mean angles
    (absolute, vector angle for multiplicity-1 tiers and subspace angle
    otherwise), boundary-tier angle bounds, the three noise criteria, and
    pairwise-angle concentration at 90 degrees. A fixed-n limit sample
    checks means (relative), variances (relative), and mean angles
    (absolute) per spike index against the drawn limit distribution.
    """
    tol = tolerances or Tolerances()
    if isinstance(prediction, LimitPrediction):
        rows = _verify_deterministic(summary, prediction, tol)
    elif isinstance(prediction, HdlssLimitSample):
        rows = _verify_hdlss(summary, prediction, tol)
    else:
        raise TypeError(f"cannot verify against {type(prediction).__name__}")
    return VerificationReport(criteria=tuple(rows), passed=all(r.passed for r in rows))


def identity_check(model: SpikeModel, seed: int, tolerance: float = 1e-7) -> IdentityReport:
    """Exercise the exact finite-sample identities on one seeded draw.

    Draws stream 0 of ``seed``, decomposes, and reports all residuals,
    including the blocked whitened-factor comparison and eigenvector
    orthonormality. Passes when every residual is at most ``tolerance``
    (the per-index bound may be satisfied with slack, so only its excess
    counts).
    """
    z = sample_z(model.n, model.d, seed, 0)
    data = sample_data(model, z)
    result = _eigen.sample_eigen(data)
    residuals = _eigen.exact_identity_residuals(
        model, z, result, include_factor=True, include_orthonormality=True
    )
    worst = max(
        residuals["rowwise"],
        residuals["trace"],
        residuals["bound"],
        residuals["orthonormality"],
        residuals["factor_max"],
        residuals["factor_frobenius"],
    )
    return IdentityReport(
        n=model.n,
        d=model.d,
        seed=int(seed),
        residuals=residuals,
        tolerance=tolerance,
        passed=worst <= tolerance,
    )


def sweep(
    model_template: SpikeModel,
    n_values: Sequence[int],
    d_over_n: float,
    reps: int,
    seed: int,
    *,
    threads: int | None = None,
) -> ConvergenceTable:
    """Convergence of spike angles and ratios over growing n at fixed d/n.

    Point i rebuilds the template's tiers at ``n = n_values[i]`` and
    ``d = round(d_over_n * n)``; derived eigenvalues stay constant across
    the sweep because d/n is constant. Each point runs under seed
    ``seed + i`` with the usual per-replication streams. Rows report the
    mean absolute deviation of the contract angle (vector angle for
    multiplicity-1 tiers, subspace angle otherwise) from its limit.
    """
    if not n_values:
        raise ValueError("n_values must be nonempty")
    if any(n < 1 for n in n_values):
        raise ValueError("n_values must be positive")
    if not d_over_n > 0:
        raise ValueError(f"d_over_n must be positive, got {d_over_n}")

    rows: list[SweepRow] = []
    for i, n in enumerate(n_values):
        d = int(round(d_over_n * n))
        specs = []
        for t in model_template.tiers:
            if t.ratio == 0.0 or math.isinf(t.ratio):
                specs.append((t.multiplicity, t.ratio, t.eigenvalue))
            else:
                specs.append((t.multiplicity, t.ratio))
        point_model = build_model(
            d, int(n), specs, basis=model_template.basis, min_spike=model_template.min_spike
        )
        summary = run_replications(
            point_model, reps, seed + i, monitored_noise=0, threads=threads
        )
        prediction = predict(point_model)
        mult_by_tier = {k + 1: t.multiplicity for k, t in enumerate(point_model.tiers)}
        by_rep: dict[int, dict[int, ReplicationRow]] = {}
        for row in summary.rows:
            by_rep.setdefault(row.index, {})[row.stream_id] = row
        for s in prediction.spikes:
            use_subspace = mult_by_tier.get(s.tier, 1) > 1
            metric = "angle_subspace_deg" if use_subspace else "angle_vector_deg"
            per_rep = by_rep[s.index]
            angles = np.array(
                [
                    getattr(per_rep[r], metric)
                    for r in sorted(per_rep)
                ]
            )
            ratios = np.array([per_rep[r].eigenvalue_ratio for r in sorted(per_rep)])
            lam = point_model.spike_eigenvalues()[s.index - 1]
            rows.append(
                SweepRow(
                    n=int(n),
                    d=d,
                    index=s.index,
                    tier=s.tier,
                    c=s.c,
                    eigenvalue=float(lam),
                    ratio_limit=s.ratio_limit,
                    mean_ratio=float(np.mean(ratios)),
                    angle_limit_deg=s.angle_limit_deg,
                    mean_angle_deg=float(np.mean(angles)),
                    mean_abs_angle_dev_deg=float(np.mean(np.abs(angles - s.angle_limit_deg))),
                    angle_metric="subspace" if use_subspace else "vector",
                )
            )
    return ConvergenceTable(
        d_over_n=float(d_over_n), reps=int(reps), seed=int(seed), rows=tuple(rows)
    )


def _fmt(value: object) -> str:
    """Deterministic CSV cell: shortest round-trip for floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _atomic_write(path: str, lines: Iterable[str]) -> None:
    """Write whole-file-or-nothing so readers never see partial output."""
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "w", newline="") as fh:
            for line in lines:
                fh.write(line)
                fh.write("\n")
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def write_replications_csv(summary: MonteCarloSummary, path: str) -> None:
    """Per-replication rows: stream_id,index,tier,eigenvalue_ratio,angle_vector_deg,angle_subspace_deg."""
    lines = ["stream_id,index,tier,eigenvalue_ratio,angle_vector_deg,angle_subspace_deg"]
    for row in summary.rows:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    row.stream_id,
                    row.index,
                    row.tier,
                    row.eigenvalue_ratio,
                    row.angle_vector_deg,
                    row.angle_subspace_deg,
                )
            )
        )
    _atomic_write(path, lines)


def write_aggregates_csv(
    summary: MonteCarloSummary,
    path: str,
    report: VerificationReport | None = None,
) -> None:
    """Aggregates with the verification verdicts merged in where they exist."""
    verdicts: dict[tuple[int, str], CriterionRow] = {}
    if report is not None:
        for c in report.criteria:
            if c.index is not None:
                verdicts[(c.index, c.metric)] = c
    lines = ["index,tier,metric,mean,median,std,predicted,tolerance,pass"]
    for agg in aggregate(summary):
        crit = verdicts.get((agg.index, agg.metric))
        predicted = crit.predicted if crit is not None else None
        tolerance = crit.tolerance if crit is not None else None
        passed = crit.passed if crit is not None else None
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    agg.index,
                    agg.tier,
                    agg.metric,
                    agg.mean,
                    agg.median,
                    agg.std,
                    predicted,
                    tolerance,
                    passed,
                )
            )
        )
    _atomic_write(path, lines)


def write_kde_csv(curves: Mapping[int, DensityCurve], path: str) -> None:
    """Density curves keyed by index: index,grid_deg,density.

    A point-mass curve writes a single row with infinite density at its
    location.
    """
    lines = ["index,grid_deg,density"]
    for index in sorted(curves):
        curve = curves[index]
        if curve.point_mass is not None:
            lines.append(f"{index},{_fmt(curve.point_mass)},{_fmt(math.inf)}")
            continue
        for g, dens in zip(curve.grid, curve.density):
            lines.append(f"{index},{_fmt(g)},{_fmt(dens)}")
    _atomic_write(path, lines)


def write_pairwise_csv(rows: Sequence[PairwiseRow], path: str) -> None:
    """Pairwise-angle stats: index,mean_pairwise_deg,std_pairwise_deg."""
    lines = ["index,mean_pairwise_deg,std_pairwise_deg"]
    for row in rows:
        lines.append(f"{row.index},{_fmt(row.mean_pairwise_deg)},{_fmt(row.std_pairwise_deg)}")
    _atomic_write(path, lines)


def write_sweep_csv(table: ConvergenceTable, path: str) -> None:
    """Convergence table rows, one per (n, spike index)."""
    lines = [
        "n,d,index,tier,c,eigenvalue,ratio_limit,mean_ratio,"
        "angle_limit_deg,mean_angle_deg,mean_abs_angle_dev_deg,angle_metric"
    ]
    for row in table.rows:
        lines.append(
            ",".join(
                [
                    _fmt(row.n),
                    _fmt(row.d),
                    _fmt(row.index),
                    _fmt(row.tier),
                    _fmt(row.c),
                    _fmt(row.eigenvalue),
                    _fmt(row.ratio_limit),
                    _fmt(row.mean_ratio),
                    _fmt(row.angle_limit_deg),
                    _fmt(row.mean_angle_deg),
                    _fmt(row.mean_abs_angle_dev_deg),
                    row.angle_metric,
                ]
            )
        )
    _atomic_write(path, lines)


def write_hdlss_draws_csv(draws: HdlssLimitSample, path: str) -> None:
    """Limit-distribution draws: draw,index,w_eigenvalue,ratio_draw,angle_draw_deg."""
    lines = ["draw,index,w_eigenvalue,ratio_draw,angle_draw_deg"]
    m = draws.w_eigenvalues.shape[1]
    for i in range(draws.draws):
        for j in range(m):
            lines.append(
                ",".join(
                    [
                        _fmt(i),
                        _fmt(j + 1),
                        _fmt(draws.w_eigenvalues[i, j]),
                        _fmt(draws.ratio_draws[i, j]),
                        _fmt(draws.angle_draws_deg[i, j]),
                    ]
                )
            )
    _atomic_write(path, lines)


def write_verification_json(report: VerificationReport, path: str) -> None:
    """Verification verdicts as JSON, written atomically."""
    payload = json.dumps(report.to_json_dict(), indent=2, sort_keys=True)
    _atomic_write(path, [payload])

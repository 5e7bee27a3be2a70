"""Theoretical limits for the sample eigenstructure.

In the growing-n regimes every monitored quantity has a deterministic
limit: spike eigenvalue ratios converge to ``1 + c``, the angle between a
spike sample eigenvector and its population counterpart (or eigenspace
block) converges to ``arccos((1 + c)^-1/2)``, noise eigenvalues scale like
``d/n``, and noise eigenvectors fall into the noise eigenspace. With n
held fixed the limits are random instead: ratios and angles converge in
distribution to functionals of an m x m Wishart-type matrix, which
:func:`hdlss_limit_sample` samples directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Regime, RegimeReport, SpikeModel, classify_regime


def cone_angle_deg(c: float) -> float:
    """The limiting angle ``arccos((1 + c)^-1/2)`` in degrees.

    Covers the whole extended range: c = 0 gives 0 (consistency), finite c
    gives an angle strictly between 0 and 90, c = inf gives 90 (strong
    inconsistency).
    """
    if math.isnan(c) or c < 0:
        raise ValueError(f"c must be nonnegative, got {c}")
    if math.isinf(c):
        return 90.0
    return float(np.degrees(np.arccos(1.0 / np.sqrt(1.0 + c))))


@dataclass(frozen=True)
class SpikeLimit:
    """Deterministic limits for one spike index."""

    index: int
    tier: int
    c: float
    ratio_limit: float
    angle_limit_deg: float


@dataclass(frozen=True)
class NoiseLimit:
    """Limits for the monitored noise indices.

    ``eigenvalue_scale_limit`` is the limit of ``n lh_j / (d lam_j)``;
    ``vector_rate`` is the decay rate of the inner product between a noise
    sample eigenvector and any fixed population eigenvector;
    ``subspace_angle_limit_deg`` is the limiting angle to the noise
    eigenspace.
    """

    eigenvalue_scale_limit: float
    vector_rate: float
    subspace_angle_limit_deg: float


@dataclass(frozen=True)
class LimitPrediction:
    """Per-index deterministic limits plus the noise block."""

    spikes: tuple[SpikeLimit, ...]
    noise: NoiseLimit

    def to_json_dict(self) -> dict:
        """JSON-safe form; infinite and boundary values become strings."""
        rows = []
        for s in self.spikes:
            c: object = s.c
            if s.c == 0.0:
                c = "0"
            elif math.isinf(s.c):
                c = "inf"
            ratio: object = s.ratio_limit
            if math.isinf(s.ratio_limit):
                ratio = "inf"
            rows.append(
                {
                    "index": s.index,
                    "tier": s.tier,
                    "c": c,
                    "ratio_limit": ratio,
                    "angle_limit_deg": s.angle_limit_deg,
                }
            )
        return {
            "spikes": rows,
            "noise": {
                "eigenvalue_scale_limit": self.noise.eigenvalue_scale_limit,
                "vector_rate": self.noise.vector_rate,
                "subspace_angle_limit_deg": self.noise.subspace_angle_limit_deg,
            },
        }


def predict_noise(model: SpikeModel, n_fixed: bool = False) -> NoiseLimit:
    """Noise-index limits: unit eigenvalue scale, vanishing spike overlap."""
    rate = 1.0 / math.sqrt(model.d) if n_fixed else math.sqrt(model.n / model.d)
    return NoiseLimit(
        eigenvalue_scale_limit=1.0,
        vector_rate=rate,
        subspace_angle_limit_deg=0.0,
    )


def predict(model: SpikeModel, regime: RegimeReport | None = None) -> LimitPrediction:
    """Deterministic limits for every spike index plus the noise block.

    Valid in the growing-n regimes only; a fixed-n regime report raises,
    because those limits are random (use :func:`hdlss_limit_sample`).
    """
    if regime is None:
        regime = classify_regime(model)
    if regime.regime is Regime.HDLSS:
        raise ValueError(
            "fixed-n models have random limits; sample them with hdlss_limit_sample"
        )
    ratios = model.spike_ratios()
    tiers = model.spike_tier_numbers()
    spikes = tuple(
        SpikeLimit(
            index=j + 1,
            tier=int(tiers[j]),
            c=float(ratios[j]),
            ratio_limit=1.0 + float(ratios[j]),
            angle_limit_deg=cone_angle_deg(float(ratios[j])),
        )
        for j in range(model.m)
    )
    return LimitPrediction(spikes=spikes, noise=predict_noise(model))


@dataclass(frozen=True, eq=False)
class HdlssLimitSample:
    """Monte Carlo draws from the fixed-n random limits.

    ``w_eigenvalues`` holds the descending eigenvalues of the m x m limit
    matrix per draw (shape (draws, m)); ``ratio_draws`` and
    ``angle_draws_deg`` hold the corresponding eigenvalue-ratio and angle
    limits per spike index. The angle is measured against the span of all
    m spike directions.
    """

    w_eigenvalues: np.ndarray
    ratio_draws: np.ndarray
    angle_draws_deg: np.ndarray
    ratios: np.ndarray
    seed: int
    draws: int


# Default stream for limit draws: the top of the 64-bit stream space, which
# replication harnesses never reach, so one seed can drive both a finite-d
# run and its limit sample without stream collisions.
DRAW_STREAM = 2**64 - 1


def hdlss_limit_sample(
    model: SpikeModel, draws: int, seed: int, stream_id: int = DRAW_STREAM
) -> HdlssLimitSample:
    """Sample the fixed-n limit distribution of ratios and angles.

    Each draw forms the m x m matrix
    ``W = diag(c)^-1/2 Z_m^T Z_m diag(c)^-1/2`` from an n x m standard
    normal block and maps its descending eigenvalues through

    - ratio limit: ``(c_j / n) w_j + c_j``,
    - angle limit: ``arccos((1 + n / w_j)^-1/2)``.

    Draws are evaluated in batches but the underlying Philox stream
    (keyed like the sampling module: ``seed + (stream_id << 64)``) is
    sequential, so results are bit-identical for any batch size. Every
    tier ratio must be finite and nonzero.
    """
    if not isinstance(draws, (int, np.integer)) or draws < 1:
        raise ValueError(f"draws must be a positive integer, got {draws!r}")
    ratios = model.spike_ratios()
    if np.any(ratios == 0.0) or np.any(np.isinf(ratios)):
        raise ValueError("fixed-n random limits require all tier ratios finite and nonzero")
    n, m = model.n, model.m
    gen = np.random.Generator(np.random.Philox(key=int(seed) + (int(stream_id) << 64)))

    inv_sqrt_c = 1.0 / np.sqrt(ratios)
    whiten = np.outer(inv_sqrt_c, inv_sqrt_c)
    w_eigs = np.empty((draws, m))
    batch = max(1, min(int(draws), 50_000_000 // (n * m)))
    done = 0
    while done < draws:
        take = min(batch, draws - done)
        zm = gen.standard_normal((take, n, m))
        gram = np.matmul(zm.transpose(0, 2, 1), zm) * whiten
        w_eigs[done : done + take] = np.linalg.eigvalsh(gram)[:, ::-1]
        done += take

    with np.errstate(divide="ignore"):
        ratio_draws = (ratios / n) * w_eigs + ratios
        angle_draws = np.degrees(np.arccos(1.0 / np.sqrt(1.0 + n / w_eigs)))
    return HdlssLimitSample(
        w_eigenvalues=w_eigs,
        ratio_draws=ratio_draws,
        angle_draws_deg=angle_draws,
        ratios=ratios,
        seed=int(seed),
        draws=int(draws),
    )

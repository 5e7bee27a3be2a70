"""Spiked-covariance model construction and validation.

A model fixes a population covariance ``Sigma = U diag(lams) U^T`` whose
first ``m`` eigenvalues (the spikes) sit strictly above a unit noise floor,
together with the sample size ``n``, an optional mean shift, and the
eigenbasis ``U``. Spikes are grouped into tiers: blocks of equal eigenvalues
that share one dimension-to-signal ratio ``c = d / (n * lam)``. Everything
downstream (sampling, eigenstructure, limit predictions, replication runs)
consumes these objects.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

# Dense d x d materialization (covariances, non-identity bases) is refused
# above this dimension.
DENSE_LIMIT = 2000

NOISE_EIGENVALUE = 1.0
DEFAULT_MIN_SPIKE = 5.0

# Finite-size stand-ins for the boundary ratios: a tier declared c = 0 must
# satisfy d/(n*lam) <= 0.05, a tier declared c = inf must satisfy >= 20.
CONSISTENT_PROXY_MAX = 0.05
INCONSISTENT_PROXY_MIN = 20.0

DISTINCT_SPIKE_LIMITS = "distinct-spike-limits"
TIER_SUBSPACE_LIMITS = "tier-subspace-limits"
BOUNDARY_LIMITS = "boundary-limits"
FIXED_N_RANDOM_LIMITS = "fixed-n-random-limits"
NOISE_LIMITS = "noise-limits"


class ConfigError(ValueError):
    """A model description is malformed or violates a model invariant."""


class Regime(str, Enum):
    """Asymptotic regime a model falls into."""

    DISTINGUISHABLE = "distinguishable"
    TIERED = "tiered"
    BOUNDARY_CONSISTENT = "boundary-consistent"
    BOUNDARY_STRONG_INCONSISTENT = "boundary-strong-inconsistent"
    HDLSS = "hdlss"


@dataclass(frozen=True)
class Tier:
    """A block of ``multiplicity`` equal spike eigenvalues.

    Parameters
    ----------
    multiplicity : int
        Number of spikes in the block.
    ratio : float
        Dimension-to-signal ratio ``c = d / (n * eigenvalue)``. The values
        ``0.0`` and ``math.inf`` mark the consistent and strongly
        inconsistent boundary regimes.
    eigenvalue : float
        Common population eigenvalue, strictly above the unit noise floor.
    """

    multiplicity: int
    ratio: float
    eigenvalue: float


@dataclass(frozen=True, eq=False)
class Basis:
    """Population eigenbasis: identity, an explicit matrix, or a seeded
    random orthogonal matrix.

    The identity basis is the only one usable at large ``d``; the other two
    require ``d <= DENSE_LIMIT`` because they materialize a dense factor.
    """

    kind: str
    matrix: np.ndarray | None = None
    seed: int | None = None

    @staticmethod
    def identity() -> "Basis":
        return Basis("identity")

    @staticmethod
    def explicit(matrix: np.ndarray) -> "Basis":
        return Basis("explicit", matrix=np.asarray(matrix, dtype=float))

    @staticmethod
    def random_orthogonal(seed: int) -> "Basis":
        return Basis("random-orthogonal", seed=int(seed))


@dataclass(frozen=True, eq=False)
class SpikeModel:
    """A validated spiked-covariance population plus sample size."""

    d: int
    n: int
    tiers: tuple[Tier, ...]
    basis: Basis
    mean: np.ndarray | None
    min_spike: float

    @property
    def m(self) -> int:
        """Total number of spikes."""
        return sum(t.multiplicity for t in self.tiers)

    @property
    def r(self) -> int:
        """Number of tiers."""
        return len(self.tiers)

    def spike_eigenvalues(self) -> np.ndarray:
        """Spike eigenvalues expanded per index, shape (m,), descending."""
        return np.repeat(
            [t.eigenvalue for t in self.tiers],
            [t.multiplicity for t in self.tiers],
        ).astype(float)

    def spike_ratios(self) -> np.ndarray:
        """Per-index ratios ``c_j``, shape (m,)."""
        return np.repeat(
            [t.ratio for t in self.tiers],
            [t.multiplicity for t in self.tiers],
        ).astype(float)

    def spike_tier_numbers(self) -> np.ndarray:
        """Per-index tier number (1-based), shape (m,)."""
        return np.repeat(
            np.arange(1, self.r + 1),
            [t.multiplicity for t in self.tiers],
        )


@dataclass(frozen=True)
class RegimeReport:
    """Regime classification plus the limit families that apply to it."""

    regime: Regime
    applicable_limits: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Population covariance in implicit spiked form.

    ``spike_directions`` is ``None`` for the identity basis (the spike
    directions are then the first ``m`` canonical coordinate vectors);
    otherwise it is the d x m orthonormal block of spike directions. Noise
    directions all carry eigenvalue 1, so the dense matrix is
    ``I + U_s (diag(lams) - I) U_s^T``.
    """

    d: int
    spike_eigenvalues: np.ndarray
    spike_directions: np.ndarray | None
    noise_eigenvalue: float = NOISE_EIGENVALUE

    def dense(self) -> np.ndarray:
        """Materialize the d x d covariance. Refused for d > DENSE_LIMIT."""
        if self.d > DENSE_LIMIT:
            raise ConfigError(
                f"dense covariance refused for d={self.d} > {DENSE_LIMIT}"
            )
        m = len(self.spike_eigenvalues)
        sigma = np.eye(self.d)
        if self.spike_directions is None:
            sigma[np.arange(m), np.arange(m)] = self.spike_eigenvalues
        else:
            u = self.spike_directions
            sigma += (u * (self.spike_eigenvalues - 1.0)) @ u.T
        return sigma


def _parse_ratio(value: object, where: str) -> float:
    """Parse a tier ratio: nonnegative number, or the strings '0' / 'inf'."""
    if isinstance(value, str):
        if value == "0":
            return 0.0
        if value == "inf":
            return math.inf
        raise ConfigError(f"{where}: c must be a number, '0', or 'inf', got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
        raise ConfigError(f"{where}: c must be a number, '0', or 'inf', got {value!r}")
    c = float(value)
    if math.isnan(c) or c < 0:
        raise ConfigError(f"{where}: c must be nonnegative, got {c}")
    return c


def _normalize_tier(spec: object, d: int, n: int, position: int) -> Tier:
    """Coerce a Tier, mapping, or (multiplicity, c[, lambda]) tuple."""
    where = f"tiers[{position}]"
    if isinstance(spec, Tier):
        mult, ratio, lam = spec.multiplicity, spec.ratio, spec.eigenvalue
    elif isinstance(spec, Mapping):
        allowed = {"multiplicity", "c", "lambda"}
        unknown = set(spec) - allowed
        if unknown:
            raise ConfigError(f"{where}: unknown key {sorted(unknown)[0]!r}")
        if "multiplicity" not in spec:
            raise ConfigError(f"{where}: missing key 'multiplicity'")
        if "c" not in spec:
            raise ConfigError(f"{where}: missing key 'c'")
        mult = spec["multiplicity"]
        ratio = _parse_ratio(spec["c"], where)
        lam = spec.get("lambda")
    elif isinstance(spec, Sequence) and not isinstance(spec, str):
        if len(spec) not in (2, 3):
            raise ConfigError(f"{where}: expected (multiplicity, c) or (multiplicity, c, lambda)")
        mult = spec[0]
        ratio = _parse_ratio(spec[1], where)
        lam = spec[2] if len(spec) == 3 else None
    else:
        raise ConfigError(f"{where}: cannot interpret {spec!r} as a tier")

    if isinstance(mult, bool) or not isinstance(mult, (int, np.integer)) or mult < 1:
        raise ConfigError(f"{where}: multiplicity must be a positive integer, got {mult!r}")
    mult = int(mult)

    if ratio == 0.0 or math.isinf(ratio):
        if lam is None:
            raise ConfigError(f"{where}: lambda is required when c is 0 or inf")
        lam = float(lam)
    else:
        derived = d / (n * ratio)
        if lam is None:
            lam = derived
        else:
            lam = float(lam)
            if not math.isclose(lam, derived, rel_tol=1e-9):
                raise ConfigError(
                    f"{where}: lambda={lam} inconsistent with d/(n*c)={derived}"
                )
    if not math.isfinite(lam) or lam <= 0:
        raise ConfigError(f"{where}: lambda must be a positive finite number, got {lam}")
    return Tier(multiplicity=mult, ratio=ratio, eigenvalue=lam)


def build_model(
    d: int,
    n: int,
    tiers: Iterable[object],
    *,
    basis: Basis | None = None,
    mean: float | Sequence[float] | np.ndarray | None = None,
    min_spike: float = DEFAULT_MIN_SPIKE,
) -> SpikeModel:
    """Validate and assemble a spiked-covariance model.

    Spike eigenvalues for finite nonzero ratios are derived as
    ``lam = d / (n * c)``; boundary tiers (``c`` equal to 0 or inf) must
    carry an explicit eigenvalue satisfying the finite-size proxy bounds
    ``d/(n*lam) <= 0.05`` and ``>= 20`` respectively. Every spike must
    exceed the unit noise floor and ``min_spike``; tier eigenvalues must be
    strictly decreasing; the total spike count is capped at ``min(n, d)``.

    Raises
    ------
    ConfigError
        If any field is malformed or any invariant fails; the message names
        the offending field.
    """
    if isinstance(d, bool) or not isinstance(d, (int, np.integer)) or d < 1:
        raise ConfigError(f"d must be a positive integer, got {d!r}")
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ConfigError(f"n must be a positive integer, got {n!r}")
    d = int(d)
    n = int(n)
    if not math.isfinite(min_spike) or min_spike <= 0:
        raise ConfigError(f"min_spike must be positive and finite, got {min_spike}")

    norm = [_normalize_tier(t, d, n, i) for i, t in enumerate(tiers)]
    if not norm:
        raise ConfigError("tiers must contain at least one tier")

    for i, t in enumerate(norm):
        where = f"tiers[{i}]"
        if t.eigenvalue <= NOISE_EIGENVALUE:
            raise ConfigError(
                f"{where}: eigenvalue {t.eigenvalue} does not exceed the unit noise floor"
            )
        if t.eigenvalue < min_spike:
            raise ConfigError(
                f"{where}: eigenvalue {t.eigenvalue} is below min_spike={min_spike}; "
                "the spike is too close to the noise floor"
            )
        proxy = d / (n * t.eigenvalue)
        if t.ratio == 0.0 and proxy > CONSISTENT_PROXY_MAX:
            raise ConfigError(
                f"{where}: c=0 requires d/(n*lambda) <= {CONSISTENT_PROXY_MAX}, got {proxy:.4g}"
            )
        if math.isinf(t.ratio) and proxy < INCONSISTENT_PROXY_MIN:
            raise ConfigError(
                f"{where}: c=inf requires d/(n*lambda) >= {INCONSISTENT_PROXY_MIN}, got {proxy:.4g}"
            )

    finite = [t.ratio for t in norm if 0.0 < t.ratio < math.inf]
    if any(b <= a for a, b in zip(finite, finite[1:])):
        raise ConfigError("tiers: finite nonzero ratios must be strictly increasing")
    lams = [t.eigenvalue for t in norm]
    if any(b >= a for a, b in zip(lams, lams[1:])):
        raise ConfigError("tiers: eigenvalues must be strictly decreasing across tiers")

    m = sum(t.multiplicity for t in norm)
    if m > min(n, d):
        raise ConfigError(f"tiers: total spike count {m} exceeds min(n, d) = {min(n, d)}")
    if m > min(n, d) / 2:
        warnings.warn(
            f"spike count {m} exceeds min(n, d)/2 = {min(n, d) / 2:.0f}; "
            "spiked asymptotics are unreliable this close to full rank",
            stacklevel=2,
        )

    if basis is None:
        basis = Basis.identity()
    if basis.kind == "identity":
        pass
    elif basis.kind == "explicit":
        if d > DENSE_LIMIT:
            raise ConfigError(f"basis: explicit basis refused for d={d} > {DENSE_LIMIT}")
        mat = basis.matrix
        if mat is None or mat.shape != (d, d):
            shape = None if mat is None else mat.shape
            raise ConfigError(f"basis: explicit matrix must have shape ({d}, {d}), got {shape}")
        gram_err = np.max(np.abs(mat.T @ mat - np.eye(d)))
        if gram_err > 1e-8:
            raise ConfigError(
                f"basis: explicit matrix is not orthonormal (max |U^T U - I| = {gram_err:.3g})"
            )
    elif basis.kind == "random-orthogonal":
        if d > DENSE_LIMIT:
            raise ConfigError(
                f"basis: random-orthogonal basis refused for d={d} > {DENSE_LIMIT}"
            )
        if basis.seed is None:
            raise ConfigError("basis: random-orthogonal basis requires a seed")
    else:
        raise ConfigError(f"basis: unknown kind {basis.kind!r}")

    if mean is None:
        mean_vec = None
    elif np.isscalar(mean):
        if float(mean) == 0.0:
            mean_vec = None
        else:
            mean_vec = np.full(d, float(mean))
    else:
        mean_vec = np.asarray(mean, dtype=float)
        if mean_vec.shape != (d,):
            raise ConfigError(f"mean: expected a scalar or length-{d} vector, got shape {mean_vec.shape}")
        if not np.all(np.isfinite(mean_vec)):
            raise ConfigError("mean: entries must be finite")

    return SpikeModel(
        d=d, n=n, tiers=tuple(norm), basis=basis, mean=mean_vec, min_spike=float(min_spike)
    )


def model_from_config(config: Mapping[str, object]) -> SpikeModel:
    """Build a model from its JSON-dict description.

    Recognized keys: ``d``, ``n``, ``tiers`` (list of
    ``{"multiplicity", "c", "lambda"}``), ``basis`` (``"identity"`` or
    ``"random-orthogonal"``), ``basis_seed``, ``mean`` (scalar or length-d
    list), ``min_spike``. Unknown keys raise ConfigError naming the key.
    """
    allowed = {"d", "n", "tiers", "basis", "basis_seed", "mean", "min_spike"}
    unknown = set(config) - allowed
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
    for key in ("d", "n", "tiers"):
        if key not in config:
            raise ConfigError(f"missing config key {key!r}")
    tiers = config["tiers"]
    if not isinstance(tiers, Sequence) or isinstance(tiers, str):
        raise ConfigError("tiers: expected a list of tier objects")

    kind = config.get("basis", "identity")
    if kind == "identity":
        basis = Basis.identity()
    elif kind == "random-orthogonal":
        seed = config.get("basis_seed")
        if seed is None:
            raise ConfigError("basis_seed is required when basis is 'random-orthogonal'")
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
            raise ConfigError(f"basis_seed must be an integer, got {seed!r}")
        basis = Basis.random_orthogonal(int(seed))
    else:
        raise ConfigError(f"basis: expected 'identity' or 'random-orthogonal', got {kind!r}")

    kwargs: dict[str, object] = {}
    if "mean" in config:
        kwargs["mean"] = config["mean"]
    if "min_spike" in config:
        ms = config["min_spike"]
        if isinstance(ms, bool) or not isinstance(ms, (int, float)):
            raise ConfigError(f"min_spike must be a number, got {ms!r}")
        kwargs["min_spike"] = float(ms)

    return build_model(config["d"], config["n"], tiers, basis=basis, **kwargs)


def index_sets(model: SpikeModel) -> list[range]:
    """1-based index blocks, one per tier plus the trailing noise block.

    Entry ``k`` (0-based position in the list) is tier ``k+1``'s index set;
    the last entry is the noise block ``{m+1, ..., d}``. Returned as
    ``range`` objects, so the noise block costs O(1) memory.
    """
    sets: list[range] = []
    start = 1
    for t in model.tiers:
        sets.append(range(start, start + t.multiplicity))
        start += t.multiplicity
    sets.append(range(start, model.d + 1))
    return sets


def classify_regime(model: SpikeModel, n_fixed: bool = False) -> RegimeReport:
    """Assign the model's asymptotic regime and the limit families it gets.

    Precedence: ``n_fixed`` wins; then any c=inf tier, then any c=0 tier,
    then any multiplicity above 1, then the fully distinguishable case.
    Fixed-n limits require every ratio finite and nonzero.
    """
    ratios = [t.ratio for t in model.tiers]
    if n_fixed:
        if any(c == 0.0 or math.isinf(c) for c in ratios):
            raise ConfigError(
                "fixed-n random limits require all tier ratios finite and nonzero"
            )
        return RegimeReport(Regime.HDLSS, (FIXED_N_RANDOM_LIMITS,))

    labels = []
    if any(0.0 < t.ratio < math.inf and t.multiplicity == 1 for t in model.tiers):
        labels.append(DISTINCT_SPIKE_LIMITS)
    if any(0.0 < t.ratio < math.inf and t.multiplicity > 1 for t in model.tiers):
        labels.append(TIER_SUBSPACE_LIMITS)
    if any(c == 0.0 or math.isinf(c) for c in ratios):
        labels.append(BOUNDARY_LIMITS)
    labels.append(NOISE_LIMITS)

    if any(math.isinf(c) for c in ratios):
        regime = Regime.BOUNDARY_STRONG_INCONSISTENT
    elif any(c == 0.0 for c in ratios):
        regime = Regime.BOUNDARY_CONSISTENT
    elif any(t.multiplicity > 1 for t in model.tiers):
        regime = Regime.TIERED
    else:
        regime = Regime.DISTINGUISHABLE
    return RegimeReport(regime, tuple(labels))


def full_basis(model: SpikeModel) -> np.ndarray | None:
    """The d x d eigenbasis, or None for the identity basis."""
    b = model.basis
    if b.kind == "identity":
        return None
    if b.kind == "explicit":
        return b.matrix
    from .sampling import random_orthogonal

    return random_orthogonal(model.d, b.seed)


def spike_basis(model: SpikeModel) -> np.ndarray | None:
    """The d x m spike-direction block, or None for the identity basis."""
    u = full_basis(model)
    return None if u is None else u[:, : model.m]


def population_covariance(model: SpikeModel) -> CovarianceSpec:
    """The model covariance in implicit spiked form."""
    return CovarianceSpec(
        d=model.d,
        spike_eigenvalues=model.spike_eigenvalues(),
        spike_directions=spike_basis(model),
    )

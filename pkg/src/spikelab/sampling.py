"""Gaussian data generation through the standardized-factor route.

Observations with covariance ``Sigma = U diag(lams) U^T`` and mean ``xi``
are produced as ``X = U diag(lams)^(1/2) Z^T + xi 1^T`` from an n x d
matrix ``Z`` of independent standard normals. Sampling ``Z`` separately
makes every replication a pure function of ``(seed, stream_id)`` and lets
the exact finite-sample identities relate ``Z`` to the sample
eigenstructure downstream.

With the identity basis only the first m rows of ``Z^T`` are scaled (the
noise eigenvalues are exactly 1), so generation costs O(n*d) and no d x d
factor is ever formed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .model import SpikeModel, full_basis

# Refuse allocations above this many matrix entries (n*d) unless the caller
# raises the budget explicitly.
DEFAULT_MAX_ENTRIES = 2_000_000_000

_MAGIC = b"SPKL"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


@dataclass(frozen=True, eq=False)
class ZMatrix:
    """An n x d standard-normal draw tagged with its (seed, stream_id).

    Reproducibility contract: entry (i, k) is variate number ``k*n + i`` of
    the Philox stream keyed by ``seed + (stream_id << 64)``, so the same
    (n, d, seed, stream_id) always yields bit-identical entries and
    distinct stream_ids yield independent streams under one seed.
    """

    entries: np.ndarray
    seed: int
    stream_id: int


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """A d x n data matrix, one observation per column.

    ``model``, ``seed``, and ``stream_id`` record provenance when the data
    came from :func:`sample_data`; they are ``None`` for data read back
    from a binary dump.
    """

    columns: np.ndarray
    model: SpikeModel | None = None
    seed: int | None = None
    stream_id: int | None = None
    centered: bool = False

    @property
    def n(self) -> int:
        return self.columns.shape[1]

    @property
    def d(self) -> int:
        return self.columns.shape[0]


def _check_uint64(value: int, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if not 0 <= value < 2**64:
        raise ValueError(f"{name} must be in [0, 2**64), got {value}")
    return value


def _generator(seed: int, stream_id: int) -> np.random.Generator:
    key = seed + (stream_id << 64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_z(
    n: int,
    d: int,
    seed: int,
    stream_id: int = 0,
    *,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> ZMatrix:
    """Draw an n x d matrix of independent standard normals.

    Uses a counter-based (Philox) stream keyed by ``seed`` in the low and
    ``stream_id`` in the high 64 bits, filled column-major; see
    :class:`ZMatrix` for the stability contract. Raises ValueError if
    ``n * d`` exceeds ``max_entries``.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ValueError(f"d must be a positive integer, got {d!r}")
    seed = _check_uint64(seed, "seed")
    stream_id = _check_uint64(stream_id, "stream_id")
    if int(n) * int(d) > max_entries:
        raise ValueError(
            f"n*d = {int(n) * int(d)} exceeds the entry budget {max_entries}; "
            "raise max_entries to allow this allocation"
        )
    gen = _generator(seed, stream_id)
    entries = gen.standard_normal(int(n) * int(d)).reshape((int(n), int(d)), order="F")
    return ZMatrix(entries=entries, seed=seed, stream_id=stream_id)


def sample_data(model: SpikeModel, z: ZMatrix) -> DataMatrix:
    """Map a standardized draw through the model: X = U diag(lams)^(1/2) Z^T + mean."""
    if z.entries.shape != (model.n, model.d):
        raise ValueError(
            f"Z shape {z.entries.shape} does not match model (n, d) = ({model.n}, {model.d})"
        )
    m = model.m
    scale = np.sqrt(model.spike_eigenvalues())
    # copy: the transpose may alias z.entries and the scaling is in place
    x = z.entries.T.copy()
    x[:m] *= scale[:, None]
    u = full_basis(model)
    if u is not None:
        x = u @ x
    if model.mean is not None:
        x += model.mean[:, None]
    return DataMatrix(columns=x, model=model, seed=z.seed, stream_id=z.stream_id)


def random_orthogonal(d: int, seed: int) -> np.ndarray:
    """A seeded d x d orthogonal matrix, uniform over the orthogonal group.

    QR of a Philox-seeded Gaussian matrix with the R-diagonal signs fixed
    positive, which makes the factor unique and uniformly distributed.
    """
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ValueError(f"d must be a positive integer, got {d!r}")
    seed = _check_uint64(seed, "seed")
    gen = _generator(seed, 0)
    a = gen.standard_normal((int(d), int(d)))
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def center(data: DataMatrix) -> DataMatrix:
    """Subtract the per-coordinate mean across observations."""
    if data.n < 2:
        raise ValueError("centering requires at least 2 observations")
    shifted = data.columns - data.columns.mean(axis=1, keepdims=True)
    return replace(data, columns=shifted, centered=True)


def dump_data(data: DataMatrix, path: str) -> None:
    """Write a DataMatrix to the binary interchange format.

    Layout: magic ``SPKL``, little-endian u32 version, u64 n, u64 d, then
    the d x n matrix as little-endian float64 in row-major order (rows are
    coordinates, columns are observations). Provenance fields are not
    stored.
    """
    header = _HEADER.pack(_MAGIC, _VERSION, data.n, data.d)
    payload = np.ascontiguousarray(data.columns, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_data(path: str) -> DataMatrix:
    """Read a DataMatrix written by :func:`dump_data`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + 8 * n * d
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    matrix = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(d, n).copy()
    return DataMatrix(columns=matrix)

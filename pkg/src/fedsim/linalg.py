"""Flat-vector numerical kernels used by every aggregation rule.

Model parameters, gradients and update deltas are all represented as 1-D
float64 numpy arrays. Every function here is a pure function of its inputs
and safe to call concurrently.
"""

import numpy as np

from .errors import (
    DegenerateCentroidError,
    DimensionMismatchError,
    EmptySetError,
    ZeroVectorError,
)

NORM_STRATEGIES = ("maxabs", "l2")


def as_vector(values) -> np.ndarray:
    """Coerce ``values`` to a 1-D float64 array and reject non-finite entries."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        v = v.reshape(-1)
    if not np.isfinite(v).all():
        raise ValueError("vector contains NaN or Inf entries")
    return v


def normalize(v, strategy: str = "maxabs") -> np.ndarray:
    """Rescale a vector so its dominant coordinates have unit magnitude.

    The default ``maxabs`` strategy divides by the L-inf norm, leaving every
    entry in [-1, 1] with at least one entry of magnitude exactly 1; this is
    what the power-scaling step expects. The ``l2`` strategy divides by the
    Euclidean norm instead.

    Raises:
        ZeroVectorError: if ``v`` is all zeros.
    """
    v = as_vector(v)
    if strategy == "maxabs":
        scale = float(np.max(np.abs(v))) if v.size else 0.0
    elif strategy == "l2":
        scale = float(np.linalg.norm(v))
    else:
        raise ValueError(f"unknown normalization strategy {strategy!r}")
    if scale == 0.0:
        raise ZeroVectorError("cannot normalize an all-zero vector")
    return v / scale


def cosine_distance(a, b) -> float:
    """Return ``1 - <a,b> / (|a|*|b|)``, clamped into [0, 2].

    Dot products and norms are accumulated in the widest available float
    type to limit cancellation; the clamp absorbs any residual drift.

    Raises:
        ZeroVectorError: if either operand has zero norm.
        DimensionMismatchError: if the operands differ in length.
    """
    a = as_vector(a)
    b = as_vector(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dim mismatch: {a.size} vs {b.size}")
    wa = a.astype(np.longdouble)
    wb = b.astype(np.longdouble)
    na = np.sqrt(np.dot(wa, wa))
    nb = np.sqrt(np.dot(wb, wb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine distance undefined for zero vectors")
    d = 1.0 - float(np.dot(wa, wb) / (na * nb))
    return min(max(d, 0.0), 2.0)


def mean_vector(vs) -> np.ndarray:
    """Element-wise arithmetic mean of a nonempty sequence of vectors.

    Fixed summation order (the order of ``vs``), so the result is
    bit-reproducible for a given input ordering.
    """
    vs = list(vs)
    if not vs:
        raise EmptySetError("mean of an empty vector set")
    arrs = [as_vector(v) for v in vs]
    dim = arrs[0].size
    for a in arrs[1:]:
        if a.size != dim:
            raise DimensionMismatchError(f"dim mismatch: {dim} vs {a.size}")
    return np.mean(np.stack(arrs, axis=0), axis=0)


def scalar_variance(xs) -> float:
    """Population variance (divide by N) of a nonempty sequence of reals."""
    xs = np.asarray(list(xs), dtype=np.float64)
    if xs.size == 0:
        raise EmptySetError("variance of an empty sequence")
    return float(np.var(xs))


def dispersion(vs) -> float:
    """Spread of a round's vectors: variance of cosine distances to their centroid.

    Computes the centroid of ``vs`` and returns the population variance of
    the per-vector cosine distances to it. Scale-invariant per vector and
    invariant under permutation of the inputs.

    Raises:
        EmptySetError: with fewer than 2 vectors.
        DegenerateCentroidError: if the centroid is the zero vector.
        ZeroVectorError: if any input vector is zero.
    """
    vs = [as_vector(v) for v in vs]
    if len(vs) < 2:
        raise EmptySetError("dispersion needs at least 2 vectors")
    centroid = mean_vector(vs)
    if not np.any(centroid):
        raise DegenerateCentroidError("round centroid is the zero vector")
    dists = [cosine_distance(v, centroid) for v in vs]
    return scalar_variance(dists)

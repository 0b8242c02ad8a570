"""Server-side aggregation rules.

Baselines (plain averaging, Multi-Krum, weak differential privacy, a
static-power single-seed filter) plus the adaptive two-stage filter that
combines dispersion-driven power scaling with core-set centroid filtering.

Every rule sorts the incoming updates by ascending client id before doing
any arithmetic, so results are bit-identical under permutation of the input
and reductions have a fixed summation order. All tie-breaks are by ascending
client id.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import (
    ConfigError,
    DegenerateCentroidError,
    DimensionMismatchError,
    EmptySetError,
    ZeroVectorError,
)

DEFENSE_KINDS = ("fedavg", "multi_krum", "weak_dp", "scope_static", "faros")

# Dispersion stand-in for a round whose normalized-update centroid is zero
# (maximal disagreement): large enough to drive the scaling power to its
# most conservative value, small enough that kappa * sentinel stays finite.
DISPERSION_SENTINEL = 1e300


@dataclass(frozen=True, eq=False)
class ClientUpdate:
    """One client's raw parameter delta for a round."""

    client_id: int
    delta: np.ndarray
    num_samples: int = 1

    def __post_init__(self):
        object.__setattr__(self, "delta", linalg.as_vector(self.delta))
        if self.num_samples < 1:
            raise ConfigError(f"num_samples must be >= 1, got {self.num_samples}")


@dataclass
class DefenseConfig:
    """Knobs for all aggregation rules; only the fields for ``kind`` matter.

    ``core_size`` (l) and ``accept_count`` (m) default to None, meaning
    "half the round's clients, rounded up" -- the honest-majority default.
    """

    kind: str = "fedavg"
    phi_max: float = 3.0
    kappa: float = 50.0
    core_size: int | None = None
    accept_count: int | None = None
    krum_f: int = 2
    clip_norm: float = 5.0
    noise_std: float = 0.0
    phi_static: float = 1.5
    global_lr: float = 1.0
    norm_strategy: str = "maxabs"
    sample_weighted: bool = False

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise ConfigError(f"unknown defense kind {self.kind!r}")
        if self.phi_max <= 1:
            raise ConfigError(f"defense.phi_max must be > 1, got {self.phi_max}")
        if self.kappa <= 0:
            raise ConfigError(f"defense.kappa must be > 0, got {self.kappa}")
        if self.clip_norm <= 0:
            raise ConfigError(f"defense.clip_norm must be > 0, got {self.clip_norm}")
        if self.noise_std < 0:
            raise ConfigError(f"defense.noise_std must be >= 0, got {self.noise_std}")
        if self.phi_static < 1:
            raise ConfigError(f"defense.phi_static must be >= 1, got {self.phi_static}")
        if self.global_lr <= 0:
            raise ConfigError(f"defense.global_lr must be > 0, got {self.global_lr}")
        if self.norm_strategy not in linalg.NORM_STRATEGIES:
            raise ConfigError(f"unknown norm strategy {self.norm_strategy!r}")

    def resolved(self, k: int) -> "DefenseConfig":
        """Fill the per-round defaults l = m = ceil(k/2) and validate against k."""
        l = self.core_size if self.core_size is not None else math.ceil(k / 2)
        m = self.accept_count if self.accept_count is not None else math.ceil(k / 2)
        if not 1 <= l <= k:
            raise ConfigError(f"core_size must be in [1, {k}], got {l}")
        if not 1 <= m <= k:
            raise ConfigError(f"accept_count must be in [1, {k}], got {m}")
        out = DefenseConfig(**{**self.__dict__, "core_size": l, "accept_count": m})
        return out


@dataclass
class RoundDiagnostics:
    """Per-round defense internals, keyed by client id where applicable."""

    d_t: float = float("nan")
    phi_t: float = float("nan")
    core_set: list[int] = field(default_factory=list)
    distances: dict[int, float] = field(default_factory=dict)
    scores: dict[int, float] = field(default_factory=dict)
    excluded: list[int] = field(default_factory=list)
    fallback: bool = False


@dataclass
class DefenseOutcome:
    """Aggregation result: the delta to apply, who was accepted, and internals."""

    aggregated_delta: np.ndarray
    accepted: list[int]
    diagnostics: RoundDiagnostics | None = None


def _sorted_updates(updates) -> list[ClientUpdate]:
    updates = list(updates)
    if not updates:
        raise EmptySetError("no client updates to aggregate")
    updates = sorted(updates, key=lambda u: u.client_id)
    dim = updates[0].delta.size
    for u in updates[1:]:
        if u.delta.size != dim:
            raise DimensionMismatchError(
                f"client {u.client_id} delta has dim {u.delta.size}, expected {dim}"
            )
    return updates


def _mean_delta(updates, sample_weighted: bool = False) -> np.ndarray:
    if sample_weighted:
        weights = np.array([u.num_samples for u in updates], dtype=np.float64)
        weights /= weights.sum()
        stack = np.stack([u.delta for u in updates])
        return weights @ stack
    return linalg.mean_vector([u.delta for u in updates])


def fedavg(updates, sample_weighted: bool = False) -> DefenseOutcome:
    """Plain averaging: accept everyone, mean the deltas in client-id order."""
    updates = _sorted_updates(updates)
    return DefenseOutcome(
        aggregated_delta=_mean_delta(updates, sample_weighted),
        accepted=[u.client_id for u in updates],
    )


def multi_krum(updates, f: int, select: int) -> DefenseOutcome:
    """Score clients by summed squared distance to nearest neighbors, keep the best.

    score_i sums the squared L2 distances from client i to its k - f - 2
    nearest neighbors; the ``select`` lowest-scoring clients are averaged.
    The k >= 2f + 3 requirement is warned about but not enforced, so its
    failure mode can be studied.
    """
    updates = _sorted_updates(updates)
    k = len(updates)
    if f < 0:
        raise ConfigError(f"krum f must be >= 0, got {f}")
    if select < 1 or select > k:
        raise ConfigError(f"multi-krum select must be in [1, {k}], got {select}")
    if k < 2 * f + 3:
        warnings.warn(
            f"multi-krum has k={k} < 2f+3={2 * f + 3}; scores are not Byzantine-safe",
            RuntimeWarning,
            stacklevel=2,
        )
    n_neighbors = min(max(k - f - 2, 1), k - 1) if k > 1 else 0

    # math.fsum gives exactly rounded, order-independent neighbor sums.
    sq_dists = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            diff = updates[i].delta - updates[j].delta
            sq_dists[i, j] = sq_dists[j, i] = float(np.dot(diff, diff))
    scores = []
    for i in range(k):
        others = sorted(np.delete(sq_dists[i], i).tolist())
        scores.append(math.fsum(others[:n_neighbors]))

    order = sorted(range(k), key=lambda i: (scores[i], updates[i].client_id))
    chosen = sorted(order[:select])
    accepted = [updates[i] for i in chosen]
    diag = RoundDiagnostics(
        scores={u.client_id: scores[i] for i, u in enumerate(updates)}
    )
    return DefenseOutcome(
        aggregated_delta=_mean_delta(accepted),
        accepted=[u.client_id for u in accepted],
        diagnostics=diag,
    )


def weak_dp(updates, clip_norm: float, noise_std: float, seed: int) -> DefenseOutcome:
    """Norm-clip every delta, average, and add seeded Gaussian noise to the mean."""
    if clip_norm <= 0:
        raise ConfigError(f"clip_norm must be > 0, got {clip_norm}")
    updates = _sorted_updates(updates)
    clipped = []
    for u in updates:
        norm = float(np.linalg.norm(u.delta))
        scale = min(1.0, clip_norm / norm) if norm > 0 else 1.0
        clipped.append(u.delta * scale if scale < 1.0 else u.delta)
    mean = linalg.mean_vector(clipped)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        mean = mean + rng.normal(0.0, noise_std, size=mean.shape)
    return DefenseOutcome(
        aggregated_delta=mean, accepted=[u.client_id for u in updates]
    )


def adaptive_phi(d_t: float, phi_max: float, kappa: float) -> float:
    """Exponential-decay scaling power: 1 + (phi_max - 1) * exp(-kappa * d_t).

    Approaches phi_max for concentrated rounds (small dispersion) and 1 for
    scattered ones. Strictly decreasing and continuous in d_t; for very
    large d_t the exponential underflows and the value is exactly 1.0.
    """
    if d_t < 0:
        raise ConfigError(f"dispersion must be >= 0, got {d_t}")
    if phi_max <= 1:
        raise ConfigError(f"phi_max must be > 1, got {phi_max}")
    if kappa <= 0:
        raise ConfigError(f"kappa must be > 0, got {kappa}")
    return 1.0 + (phi_max - 1.0) * math.exp(-kappa * d_t)


def differential_scale(v, phi: float) -> np.ndarray:
    """Element-wise |x|^phi * sgn(x); expects a normalized vector (entries in [-1, 1]).

    {-1, 0, 1} are fixed points for any power; phi > 1 suppresses small
    coordinates relative to dominant ones.
    """
    v = linalg.as_vector(v)
    return np.sign(v) * np.abs(v) ** phi


def pairwise_scores(scaled) -> list[float]:
    """Mutual-dissimilarity score per vector: sum of cosine distances to all vectors.

    The sum runs over every vector including itself (the self term is 0 and
    never affects the ranking).
    """
    scaled = [linalg.as_vector(v) for v in scaled]
    k = len(scaled)
    dists = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            dists[i, j] = dists[j, i] = linalg.cosine_distance(scaled[i], scaled[j])
    return [float(np.sum(dists[i])) for i in range(k)]


def select_core_set(scores, l: int) -> list[int]:
    """Positions of the ``l`` smallest scores, ties broken by lower position."""
    scores = list(scores)
    if not 1 <= l <= len(scores):
        raise ConfigError(f"core size must be in [1, {len(scores)}], got {l}")
    order = sorted(range(len(scores)), key=lambda i: (scores[i], i))
    return sorted(order[:l])


def rcc_filter(scaled, core, m: int):
    """Accept the ``m`` vectors nearest the core set's centroid.

    Returns (centroid, accepted positions, per-vector cosine distances).
    The centroid averages the scaled vectors at the ``core`` positions; a
    zero centroid is degenerate and raises.
    """
    scaled = [linalg.as_vector(v) for v in scaled]
    core = list(core)
    if not core:
        raise EmptySetError("core set is empty")
    if not 1 <= m <= len(scaled):
        raise ConfigError(f"accept count must be in [1, {len(scaled)}], got {m}")
    centroid = linalg.mean_vector([scaled[i] for i in core])
    if not np.any(centroid):
        raise DegenerateCentroidError("core-set centroid is the zero vector")
    dists = [linalg.cosine_distance(v, centroid) for v in scaled]
    order = sorted(range(len(scaled)), key=lambda i: (dists[i], i))
    return centroid, sorted(order[:m]), dists


def _fallback_outcome(updates, diag: RoundDiagnostics, sample_weighted: bool) -> DefenseOutcome:
    diag.fallback = True
    out = fedavg(updates, sample_weighted)
    out.diagnostics = diag
    return out


def _scaled_pipeline(updates, prev_global, cfg: DefenseConfig, norm_strategy, phi_fn, single_core: bool):
    """Shared two-stage filter behind the adaptive and static-power rules.

    Pipeline: normalize each delta -> dispersion -> scaling power ->
    power-scale -> mutual-similarity core set -> centroid filtering ->
    uniform mean of the accepted raw deltas. Zero-delta clients are excluded
    up front; degenerate rounds fall back to plain averaging over all
    updates, flagged in the diagnostics.
    """
    updates = _sorted_updates(updates)
    if prev_global is not None:
        prev_global = linalg.as_vector(prev_global)
        if prev_global.size != updates[0].delta.size:
            raise DimensionMismatchError(
                f"global model dim {prev_global.size} != delta dim {updates[0].delta.size}"
            )
    cfg = cfg.resolved(len(updates))
    diag = RoundDiagnostics()

    live, normalized = [], []
    for u in updates:
        try:
            normalized.append(linalg.normalize(u.delta, norm_strategy))
            live.append(u)
        except ZeroVectorError:
            diag.excluded.append(u.client_id)
            warnings.warn(
                f"client {u.client_id} sent an all-zero update; excluded from filtering",
                RuntimeWarning,
                stacklevel=3,
            )

    needed = 1 if single_core else cfg.core_size
    if len(live) < 2 or len(live) < max(needed, cfg.accept_count):
        return _fallback_outcome(updates, diag, cfg.sample_weighted)

    try:
        diag.d_t = linalg.dispersion(normalized)
    except DegenerateCentroidError:
        diag.d_t = DISPERSION_SENTINEL
    diag.phi_t = phi_fn(diag.d_t)

    scaled = [differential_scale(v, diag.phi_t) for v in normalized]
    scores = pairwise_scores(scaled)
    diag.scores = {u.client_id: s for u, s in zip(live, scores)}
    core = select_core_set(scores, 1 if single_core else cfg.core_size)
    diag.core_set = [live[i].client_id for i in core]

    try:
        _, accepted_pos, dists = rcc_filter(scaled, core, cfg.accept_count)
    except DegenerateCentroidError:
        return _fallback_outcome(updates, diag, cfg.sample_weighted)
    diag.distances = {u.client_id: d for u, d in zip(live, dists)}

    accepted = [live[i] for i in accepted_pos]
    return DefenseOutcome(
        aggregated_delta=_mean_delta(accepted, cfg.sample_weighted),
        accepted=[u.client_id for u in accepted],
        diagnostics=diag,
    )


def faros_aggregate(
    updates, prev_global, cfg: DefenseConfig, norm_strategy: str | None = None
) -> DefenseOutcome:
    """Adaptive two-stage filter: dispersion-driven scaling plus core-set filtering.

    The scaling power adapts each round to the dispersion of the normalized
    updates; the trust anchor is the centroid of the most mutually similar
    core set rather than any single client. With ``accept_count == k`` the
    result equals :func:`fedavg` element-wise.
    """
    strategy = norm_strategy if norm_strategy is not None else cfg.norm_strategy
    return _scaled_pipeline(
        updates,
        prev_global,
        cfg,
        strategy,
        phi_fn=lambda d: adaptive_phi(d, cfg.phi_max, cfg.kappa),
        single_core=False,
    )


def scope_static_aggregate(updates, prev_global, cfg: DefenseConfig) -> DefenseOutcome:
    """Static-power single-seed baseline.

    Same pipeline with two deliberate weaknesses: the scaling power is the
    fixed ``phi_static`` (no adaptation) and the core set collapses to the
    single most mutually similar client, whose vector alone becomes the
    filtering anchor.
    """
    return _scaled_pipeline(
        updates,
        prev_global,
        cfg,
        cfg.norm_strategy,
        phi_fn=lambda d: cfg.phi_static,
        single_core=True,
    )


def aggregate(
    updates, prev_global, cfg: DefenseConfig, seed: int = 0
) -> DefenseOutcome:
    """Dispatch to the rule selected by ``cfg.kind``."""
    if cfg.kind == "fedavg":
        return fedavg(updates, cfg.sample_weighted)
    if cfg.kind == "multi_krum":
        k = len(list(updates))
        resolved = cfg.resolved(k)
        return multi_krum(updates, cfg.krum_f, resolved.accept_count)
    if cfg.kind == "weak_dp":
        return weak_dp(updates, cfg.clip_norm, cfg.noise_std, seed)
    if cfg.kind == "scope_static":
        return scope_static_aggregate(updates, prev_global, cfg)
    if cfg.kind == "faros":
        return faros_aggregate(updates, prev_global, cfg)
    raise ConfigError(f"unknown defense kind {cfg.kind!r}")

"""Malicious-client behaviors.

Four attack kinds on top of honest training: plain data poisoning,
model replacement (boosted updates), constrain-and-scale (stealth-regularized
training), and edge-case PGD (tail-data backdoor with norm-ball projection).
Attackers collude only through a shared config and trigger; every routine is
a pure function of its arguments.
"""

import collections
from dataclasses import dataclass

import numpy as np

from .data import TriggerSpec, apply_trigger, edge_case_pool, poison_dataset
from .errors import ConfigError, DimensionMismatchError, ZeroVectorError
from .model import ModelSpec, TrainSpec, _epoch_order, _loss_grad_arrays, _stack, local_train


ATTACK_KINDS = ("none", "data_poison", "model_replacement", "constrain_and_scale", "edge_case_pgd")


@dataclass
class AttackConfig:
    """Knobs for the malicious side; only the fields relevant to ``kind`` matter.

    ``boost=None`` means "resolve to the per-round client count" (the value
    that makes a single boosted update dominate a plain average).
    """

    kind: str = "none"
    trigger: TriggerSpec | None = None
    poison_rate: float = 0.5
    boost: float | None = None
    alpha: float = 0.5
    pgd_radius: float = 2.0
    edge_fraction: float = 0.2
    pgd_per_step: bool = False

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if not 0 <= self.alpha <= 1:
            raise ConfigError(f"attack.alpha must be in [0, 1], got {self.alpha}")
        if self.boost is not None and self.boost < 1:
            raise ConfigError(f"attack.boost must be >= 1, got {self.boost}")
        if self.pgd_radius <= 0:
            raise ConfigError(f"attack.pgd_radius must be > 0, got {self.pgd_radius}")


def model_replacement(local_params, global_params, boost: float) -> np.ndarray:
    """Amplify a local update: global + boost * (local - global)."""
    local_params = np.asarray(local_params, dtype=np.float64)
    global_params = np.asarray(global_params, dtype=np.float64)
    if local_params.shape != global_params.shape:
        raise DimensionMismatchError(
            f"dim mismatch: {local_params.size} vs {global_params.size}"
        )
    return global_params + boost * (local_params - global_params)


def pgd_project(params, center, radius: float) -> np.ndarray:
    """Project ``params`` onto the L2 ball of ``radius`` around ``center``."""
    params = np.asarray(params, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if params.shape != center.shape:
        raise DimensionMismatchError(f"dim mismatch: {params.size} vs {center.size}")
    diff = params - center
    norm = float(np.linalg.norm(diff))
    if norm <= radius:
        return params
    return center + (radius / norm) * diff


def cosine_loss_and_grad(params, global_params) -> tuple[float, np.ndarray]:
    """Cosine-distance stealth term between current params and the global model.

    Returns (1 - cos(params, global_params)) and its analytic gradient with
    respect to ``params``.
    """
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(global_params, dtype=np.float64)
    if p.shape != g.shape:
        raise DimensionMismatchError(f"dim mismatch: {p.size} vs {g.size}")
    np_norm = float(np.linalg.norm(p))
    ng_norm = float(np.linalg.norm(g))
    if np_norm == 0.0 or ng_norm == 0.0:
        raise ZeroVectorError("cosine stealth loss undefined for zero vectors")
    cos = float(np.dot(p, g)) / (np_norm * ng_norm)
    grad = (cos / (np_norm * np_norm)) * p - g / (np_norm * ng_norm)
    return 1.0 - cos, grad


def constrain_and_scale_train(
    global_params, spec: ModelSpec, poisoned_data, tspec: TrainSpec, alpha: float
) -> np.ndarray:
    """SGD on (1-alpha) * classification loss + alpha * cosine stealth loss.

    alpha = 0 reproduces plain poisoned training bit-for-bit; alpha = 1
    descends the stealth term alone.
    """
    if not 0 <= alpha <= 1:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    global_params = np.asarray(global_params, dtype=np.float64)
    if not np.any(global_params):
        raise ZeroVectorError("stealth term undefined against an all-zero global model")
    poisoned_data = list(poisoned_data)
    params = np.array(global_params, copy=True)
    x, y = _stack(poisoned_data)
    n = x.shape[0]
    for epoch in range(tspec.local_epochs):
        order = _epoch_order(tspec.seed, epoch, n)
        for start in range(0, n, tspec.batch_size):
            idx = order[start : start + tspec.batch_size]
            _, g_class = _loss_grad_arrays(params, spec, x[idx], y[idx])
            if alpha == 0.0:
                grad = g_class
            else:
                _, g_cos = cosine_loss_and_grad(params, global_params)
                grad = (1.0 - alpha) * g_class + alpha * g_cos
            params = params - tspec.learning_rate * grad
    return params


def _edge_source_label(local_data, target_label: int) -> int:
    """Most frequent non-target label in the local data (ties to lowest label)."""
    counts = collections.Counter(
        e.label for e in local_data if e.label != target_label
    )
    if not counts:
        raise ConfigError("no non-target examples to build an edge-case pool from")
    best = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))
    return best[0]


def edge_case_pgd_train(
    global_params, spec: ModelSpec, local_data, tspec: TrainSpec, acfg: AttackConfig
) -> np.ndarray:
    """Backdoor training on local data plus a triggered edge-case tail.

    The pool is the far tail of the dominant non-target class in the local
    data. After every epoch (or every step with ``pgd_per_step``) the params
    are projected back into the L2 ball of ``pgd_radius`` around the global
    model, so the returned model always lies within that ball.
    """
    local_data = list(local_data)
    if acfg.trigger is None:
        raise ConfigError("edge_case_pgd needs a trigger")
    source = _edge_source_label(local_data, acfg.trigger.target_label)
    pool = edge_case_pool(local_data, source, acfg.edge_fraction, tspec.seed)
    if not pool:
        raise ConfigError("edge-case pool is empty")
    train_set = local_data + [apply_trigger(e, acfg.trigger) for e in pool]

    global_params = np.asarray(global_params, dtype=np.float64)
    params = np.array(global_params, copy=True)
    x, y = _stack(train_set)
    n = x.shape[0]
    for epoch in range(tspec.local_epochs):
        order = _epoch_order(tspec.seed, epoch, n)
        for start in range(0, n, tspec.batch_size):
            idx = order[start : start + tspec.batch_size]
            _, grad = _loss_grad_arrays(params, spec, x[idx], y[idx])
            params = params - tspec.learning_rate * grad
            if acfg.pgd_per_step:
                params = pgd_project(params, global_params, acfg.pgd_radius)
        params = pgd_project(params, global_params, acfg.pgd_radius)
    return params


def malicious_local_train(
    global_params, spec: ModelSpec, local_data, tspec: TrainSpec, acfg: AttackConfig
) -> np.ndarray:
    """Dispatch local training by attack kind.

    ``none`` is byte-identical to honest training. The poisoning kinds train
    on a seeded poisoned copy of the local data; constrain-and-scale falls
    back to plain poisoned training when the global model is all zeros (its
    stealth term is undefined there).
    """
    if acfg.kind == "none":
        return local_train(global_params, spec, local_data, tspec)
    if acfg.trigger is None:
        raise ConfigError(f"attack kind {acfg.kind!r} needs a trigger")

    # an attacker holding only target-label data has nothing to poison and
    # falls back to its unmodified local set (boost/projection still apply)
    local_data = list(local_data)
    eligible = any(e.label != acfg.trigger.target_label for e in local_data)

    if acfg.kind == "edge_case_pgd":
        if not eligible:
            params = local_train(global_params, spec, local_data, tspec)
            return pgd_project(params, np.asarray(global_params, dtype=np.float64), acfg.pgd_radius)
        return edge_case_pgd_train(global_params, spec, local_data, tspec, acfg)

    if eligible:
        poisoned = poison_dataset(local_data, acfg.trigger, acfg.poison_rate, tspec.seed)
    else:
        poisoned = local_data
    if acfg.kind == "data_poison":
        return local_train(global_params, spec, poisoned, tspec)
    if acfg.kind == "model_replacement":
        if acfg.boost is None:
            raise ConfigError("attack.boost must be resolved before training")
        local = local_train(global_params, spec, poisoned, tspec)
        return model_replacement(local, global_params, acfg.boost)
    if acfg.kind == "constrain_and_scale":
        if not np.any(np.asarray(global_params)):
            return local_train(global_params, spec, poisoned, tspec)
        return constrain_and_scale_train(global_params, spec, poisoned, tspec, acfg.alpha)
    raise ConfigError(f"unknown attack kind {acfg.kind!r}")

"""Round orchestration: sampling, training dispatch, defense, metrics, persistence.

The whole run is a pure function of the master seed. Per-purpose seeds are
derived through SeedSequence so client training, sampling, data generation
and defense noise never share a stream; client sampling itself uses a
counter-based Philox generator keyed by (master_seed, round).
"""

import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .attacks import AttackConfig, malicious_local_train
from .data import Example, TriggerSpec, dirichlet_partition, gen_blobs
from .defenses import ClientUpdate, DefenseConfig, aggregate
from .errors import ConfigError
from .model import ModelSpec, TrainSpec, evaluate_acc, evaluate_asr, init_params, local_train

# Seed-stream tags (see _derive_seed).
_TAG_DATA, _TAG_PARTITION, _TAG_CLIENT, _TAG_DP_NOISE, _TAG_INIT = range(5)

CSV_HEADER = "round,acc,asr,d_t,phi_t,accepted,malicious_selected,tp,fp,fn,wall_ms"


@dataclass
class DataConfig:
    """Synthetic dataset shape plus the heterogeneity and trigger settings."""

    num_classes: int = 10
    feature_dim: int = 16
    n_per_class: int = 100
    test_per_class: int = 40
    class_sep: float = 6.0
    dirichlet_q: float = 0.4
    trigger: TriggerSpec = field(
        default_factory=lambda: TriggerSpec((13, 14, 15), (8.0, -8.0, 8.0), 0)
    )


@dataclass
class SimConfig:
    """Full experiment description; every run is determined by this plus nothing."""

    total_clients: int = 50
    clients_per_round: int = 10
    malicious_count: int = 10
    rounds: int = 100
    eval_every: int = 1
    master_seed: int = 7
    force_c_per_round: int | None = None
    parallel_clients: bool = False
    model: ModelSpec = field(default_factory=lambda: ModelSpec(16, 10))
    train: TrainSpec = field(default_factory=lambda: TrainSpec(2, 32, 0.25, 0))
    data: DataConfig = field(default_factory=DataConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    defense: DefenseConfig = field(default_factory=DefenseConfig)

    def validate(self):
        if self.clients_per_round > self.total_clients:
            raise ConfigError(
                f"clients_per_round {self.clients_per_round} exceeds "
                f"total_clients {self.total_clients}"
            )
        if self.clients_per_round < 1 or self.total_clients < 1:
            raise ConfigError("client counts must be positive")
        if self.malicious_count < 0 or self.malicious_count > self.total_clients:
            raise ConfigError(f"malicious_count out of range: {self.malicious_count}")
        if self.rounds < 1 or self.eval_every < 1:
            raise ConfigError("rounds and eval_every must be positive")
        if self.model.input_dim != self.data.feature_dim:
            raise ConfigError(
                f"model input_dim {self.model.input_dim} != feature_dim "
                f"{self.data.feature_dim}"
            )
        if self.force_c_per_round is not None:
            c = self.force_c_per_round
            if c < 0 or c > min(self.clients_per_round, self.malicious_count):
                raise ConfigError(f"force_c_per_round out of range: {c}")
            if c >= self.clients_per_round / 2:
                warnings.warn(
                    "forced malicious count is not an honest majority",
                    RuntimeWarning,
                    stacklevel=2,
                )
        expected = self.clients_per_round * self.malicious_count / self.total_clients
        if expected >= self.clients_per_round / 2:
            warnings.warn(
                "expected malicious share per round is not an honest majority",
                RuntimeWarning,
                stacklevel=2,
            )


@dataclass
class RoundRecord:
    """One evaluated round: metrics, defense internals, detection confusion counts."""

    round: int
    acc: float
    asr: float
    d_t: float
    phi_t: float
    accepted: list[int]
    malicious_selected: list[int]
    tp: int
    fp: int
    fn: int
    wall_ms: float


@dataclass
class SimState:
    """Everything carried between rounds."""

    round: int
    global_params: np.ndarray
    dataset: list[Example]
    test_set: list[Example]
    partition: dict[int, list[int]]


def _derive_seed(master_seed: int, tag: int, *parts: int) -> int:
    ss = np.random.SeedSequence([master_seed, tag, *parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_clients(total: int, k: int, round_idx: int, master_seed: int) -> list[int]:
    """k distinct client ids for a round, from a Philox stream keyed by (seed, round)."""
    if k > total:
        raise ConfigError(f"cannot sample {k} of {total} clients")
    key = np.array([master_seed & 0xFFFFFFFFFFFFFFFF, round_idx], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return sorted(int(i) for i in gen.permutation(total)[:k])


def _sample_forced(cfg: SimConfig, round_idx: int) -> list[int]:
    """Sample with exactly force_c_per_round malicious roster members pinned in."""
    c = cfg.force_c_per_round
    mc = cfg.malicious_count
    key = np.array([cfg.master_seed & 0xFFFFFFFFFFFFFFFF, round_idx], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    mal = gen.permutation(mc)[:c]
    hon = gen.permutation(cfg.total_clients - mc)[: cfg.clients_per_round - c] + mc
    return sorted(int(i) for i in np.concatenate([mal, hon]))


def build_state(cfg: SimConfig) -> SimState:
    """Generate data, deal it to clients, and initialize the global model.

    Train and held-out test sets come from a single blob draw (shared class
    centers) split per class; the test split is never partitioned to clients.
    """
    cfg.validate()
    d = cfg.data
    per_class = d.n_per_class + d.test_per_class
    blob_seed = _derive_seed(cfg.master_seed, _TAG_DATA)
    full = gen_blobs(d.num_classes, d.feature_dim, per_class, d.class_sep, blob_seed)
    train, test = [], []
    for c in range(d.num_classes):
        block = full[c * per_class : (c + 1) * per_class]
        train.extend(block[: d.n_per_class])
        test.extend(block[d.n_per_class :])
    part = dirichlet_partition(
        [e.label for e in train],
        cfg.total_clients,
        d.dirichlet_q,
        _derive_seed(cfg.master_seed, _TAG_PARTITION),
    )
    params = init_params(cfg.model, _derive_seed(cfg.master_seed, _TAG_INIT))
    return SimState(
        round=1,
        global_params=params,
        dataset=train,
        test_set=test,
        partition=part.assignments,
    )


def _resolve_attack(cfg: SimConfig) -> AttackConfig:
    acfg = cfg.attack
    if acfg.trigger is None:
        acfg = replace(acfg, trigger=cfg.data.trigger)
    if acfg.boost is None:
        acfg = replace(acfg, boost=float(cfg.clients_per_round))
    return acfg


def _train_one(state: SimState, cfg: SimConfig, acfg: AttackConfig, client_id: int):
    data = [state.dataset[j] for j in state.partition[client_id]]
    seed = _derive_seed(cfg.master_seed, _TAG_CLIENT, state.round, client_id)
    tspec = replace(cfg.train, seed=seed)
    if client_id < cfg.malicious_count and acfg.kind != "none":
        params = malicious_local_train(state.global_params, cfg.model, data, tspec, acfg)
    else:
        params = local_train(state.global_params, cfg.model, data, tspec)
    return ClientUpdate(client_id, params - state.global_params, len(data))


def run_round(state: SimState, cfg: SimConfig) -> tuple[SimState, RoundRecord]:
    """Execute one full round and report it.

    Sampled roster members (ids below malicious_count) train maliciously,
    everyone else honestly; the configured defense aggregates the deltas and
    the global model moves by global_lr times the aggregated delta. ACC/ASR
    are evaluated on rounds divisible by eval_every (NaN otherwise).
    """
    t0 = time.perf_counter()
    r = state.round
    if cfg.force_c_per_round is not None:
        ids = _sample_forced(cfg, r)
    else:
        ids = sample_clients(cfg.total_clients, cfg.clients_per_round, r, cfg.master_seed)
    acfg = _resolve_attack(cfg)

    if cfg.parallel_clients:
        with ThreadPoolExecutor(max_workers=min(8, len(ids))) as pool:
            updates = list(pool.map(lambda i: _train_one(state, cfg, acfg, i), ids))
    else:
        updates = [_train_one(state, cfg, acfg, i) for i in ids]
    updates.sort(key=lambda u: u.client_id)

    outcome = aggregate(
        updates,
        state.global_params,
        cfg.defense,
        seed=_derive_seed(cfg.master_seed, _TAG_DP_NOISE, r),
    )
    new_params = state.global_params + cfg.defense.global_lr * outcome.aggregated_delta

    malicious = [i for i in ids if i < cfg.malicious_count]
    accepted = set(outcome.accepted)
    tp = sum(1 for i in malicious if i not in accepted)
    fp = sum(1 for i in ids if i >= cfg.malicious_count and i not in accepted)
    fn = len(malicious) - tp

    acc = asr = float("nan")
    if r % cfg.eval_every == 0:
        acc = evaluate_acc(new_params, cfg.model, state.test_set)
        asr = evaluate_asr(new_params, cfg.model, state.test_set, acfg.trigger)

    diag = outcome.diagnostics
    record = RoundRecord(
        round=r,
        acc=acc,
        asr=asr,
        d_t=diag.d_t if diag is not None else float("nan"),
        phi_t=diag.phi_t if diag is not None else float("nan"),
        accepted=sorted(outcome.accepted),
        malicious_selected=malicious,
        tp=tp,
        fp=fp,
        fn=fn,
        wall_ms=(time.perf_counter() - t0) * 1000.0,
    )
    new_state = SimState(
        round=r + 1,
        global_params=new_params,
        dataset=state.dataset,
        test_set=state.test_set,
        partition=state.partition,
    )
    return new_state, record


def run_simulation(cfg: SimConfig) -> list[RoundRecord]:
    """Run all rounds from a fresh initialization; keep records of evaluated rounds."""
    state = build_state(cfg)
    records = []
    for _ in range(cfg.rounds):
        r = state.round
        state, record = run_round(state, cfg)
        if r % cfg.eval_every == 0:
            records.append(record)
    return records


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _round_sig(x: float) -> float:
    if isinstance(x, float) and math.isnan(x):
        return x
    return float(_fmt(x))


def _ids(ids) -> str:
    return ";".join(str(i) for i in ids)


def summarize(records) -> dict:
    """Final metrics plus mean detection precision/recall over defined rounds."""
    if not records:
        return {
            "final_acc": float("nan"),
            "final_asr": float("nan"),
            "mean_detection_precision": float("nan"),
            "mean_detection_recall": float("nan"),
        }
    precisions = [r.tp / (r.tp + r.fp) for r in records if r.tp + r.fp > 0]
    recalls = [r.tp / (r.tp + r.fn) for r in records if r.tp + r.fn > 0]
    return {
        "final_acc": _round_sig(records[-1].acc),
        "final_asr": _round_sig(records[-1].asr),
        "mean_detection_precision": (
            _round_sig(float(np.mean(precisions))) if precisions else float("nan")
        ),
        "mean_detection_recall": (
            _round_sig(float(np.mean(recalls))) if recalls else float("nan")
        ),
    }


def write_results(records, path, format: str = "csv", config_echo: dict | None = None):
    """Persist records as CSV (fixed header) or JSON (config echo + summary).

    Floats are serialized with 9 significant digits; id lists are
    semicolon-separated in the CSV. Writes are atomic (temp file + rename).
    """
    if format == "csv":
        lines = [CSV_HEADER]
        for r in records:
            lines.append(
                ",".join(
                    [
                        str(r.round),
                        _fmt(r.acc),
                        _fmt(r.asr),
                        _fmt(r.d_t),
                        _fmt(r.phi_t),
                        _ids(r.accepted),
                        _ids(r.malicious_selected),
                        str(r.tp),
                        str(r.fp),
                        str(r.fn),
                        _fmt(r.wall_ms),
                    ]
                )
            )
        payload = "\n".join(lines) + "\n"
    elif format == "json":
        doc = {
            "config": config_echo or {},
            "records": [
                {
                    "round": r.round,
                    "acc": _round_sig(r.acc),
                    "asr": _round_sig(r.asr),
                    "d_t": _round_sig(r.d_t),
                    "phi_t": _round_sig(r.phi_t),
                    "accepted": list(r.accepted),
                    "malicious_selected": list(r.malicious_selected),
                    "tp": r.tp,
                    "fp": r.fp,
                    "fn": r.fn,
                    "wall_ms": _round_sig(r.wall_ms),
                }
                for r in records
            ],
            "summary": summarize(records),
        }
        payload = json.dumps(doc, indent=2) + "\n"
    else:
        raise ConfigError(f"unknown result format {format!r}")

    try:
        tmp = f"{path}.tmp"
        with open(tmp, "w", newline="") as f:
            f.write(payload)
        os.replace(tmp, path)
    except OSError as e:
        raise OSError(f"failed writing results to {path}: {e}") from e

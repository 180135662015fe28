"""Experiment orchestration: configuration, round loop, metrics, emission.

One logical round serializes the asynchronous protocol as: sample clients,
collect local submissions, verify the queued clients, apply trust updates,
aggregate, evaluate.  Every random choice draws from its own labeled sub-seed
of the master seed, so two runs with the same configuration are bit-identical
(apart from wall-clock timings) and paired runs that differ in one knob keep
all other randomness aligned.
"""

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import defense, ledger, nn
from .clients import Attack, AttackParams, ClientProfile, local_round
from .data import Dataset, PartitionSpec, PoisonSpec, gen_dataset, load_csv, partition_non_iid, triggered_testset
from .errors import ConfigError, DegenerateAggregationError, DomainError
from .seeds import derive_seed

__all__ = [
    "SimConfig",
    "RoundMetrics",
    "RunResult",
    "run",
    "eval_ma",
    "eval_ba",
    "eval_detection",
    "emit",
    "time_verify_cost",
]


@dataclass
class SimConfig:
    """Everything a simulation run needs; defaults are the desk-scale setup."""

    n_clients: int = 40
    queue_size: int = 10          # submissions per aggregation
    verify_set_size: int = 10     # clients verified per round
    n_verifiers: int = 5
    verify_subset_size: int = 4   # clients per verifier
    rounds: int = 100
    attacker_ratio: float = 0.0
    non_iid_degree: float = 0.5
    poison_rate: float = 0.33
    attack: str = "none"
    verifier_policy: str = "open"
    bad_verifier_fraction: float = 0.0
    bad_verifier_mode: str = "reverse"
    defense_enabled: bool = True
    learning_rate: float = 0.01
    local_epochs: int = 1
    batch_size: int = 200
    hidden_width: int = 32
    n_classes: int = 5
    n_features: int = 20
    per_client_size: int = 200
    test_size: int = 1000
    trigger_coords: tuple = (1, 2, 3)
    trigger_value: float = 5.0
    target_class: int = 0
    edge_case: bool = False
    replace_gamma: float = None   # default: queue_size
    pgd_delta: float = None       # default: 0.8 * median benign warm-up norm
    data_csv: str = None
    test_fraction: float = 0.2    # holdout share when loading from CSV
    pool_factor: float = 1.6      # synthetic pool size margin for partitioning
    data_separation: float = 5.0
    warm_start_size: int = 2000   # held-out samples to pre-train the initial model (0 = raw init)
    warm_start_epochs: int = 120
    verify_lag: int = 0           # delay trust updates by this many rounds
    force_unit_scores: bool = False
    seed: int = 1

    def __post_init__(self):
        self.trigger_coords = tuple(int(c) for c in self.trigger_coords)
        self.attack = Attack(self.attack).value

    def validate(self):
        if self.queue_size > self.n_clients:
            raise ConfigError("queue_size cannot exceed n_clients")
        if self.verify_subset_size > self.verify_set_size:
            raise ConfigError("verify_subset_size cannot exceed verify_set_size")
        if self.defense_enabled and self.verify_set_size != self.queue_size:
            raise ConfigError(
                "simulation runs verify exactly the queued clients; "
                "set verify_set_size equal to queue_size"
            )
        if self.defense_enabled and self.verify_subset_size < 2:
            raise ConfigError("verifiers need at least two clients to compare")
        if not 0.0 <= self.attacker_ratio <= 1.0:
            raise ConfigError("attacker_ratio must lie in [0, 1]")
        if not 0.0 <= self.bad_verifier_fraction <= 1.0:
            raise ConfigError("bad_verifier_fraction must lie in [0, 1]")
        if self.bad_verifier_mode not in ("random", "reverse"):
            raise ConfigError("bad_verifier_mode must be random or reverse")
        if self.verifier_policy not in ("open", "caav"):
            raise ConfigError("verifier_policy must be open or caav")
        if self.rounds < 1:
            raise ConfigError("rounds must be positive")
        if self.verify_lag < 0:
            raise ConfigError("verify_lag must be nonnegative")
        if self.data_csv is None:
            if not 0 <= self.target_class < self.n_classes:
                raise ConfigError("target_class out of range")
            if max(self.trigger_coords) >= self.n_features:
                raise ConfigError("trigger coordinate out of feature range")
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["trigger_coords"] = list(self.trigger_coords)
        return out

    @classmethod
    def from_file(cls, path) -> "SimConfig":
        """Parse a flat ``key = value`` file (# starts a comment)."""
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, text = line.partition("=")
            key, text = key.strip(), text.strip()
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, text)
        return cls(**values)


def _parse_value(key: str, text: str):
    if text == "" or text.lower() == "none":
        return None
    if key == "trigger_coords":
        return tuple(int(p) for p in text.split(",") if p.strip())
    lowered = text.lower()
    if lowered in ("true", "on", "yes"):
        return True
    if lowered in ("false", "off", "no"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


@dataclass(frozen=True)
class RoundMetrics:
    round_index: int
    ma: float
    ba: float
    tpr: float          # None when the queue held no attacker
    tnr: float          # None when the queue held no benign client
    wall_time: float


@dataclass
class RunResult:
    config: SimConfig
    metrics: list
    summary: dict
    final_model: nn.ModelParams
    state: ledger.ContractState
    trust: ledger.TrustLedger
    diagnostics: dict = field(default_factory=dict)


def eval_ma(model: nn.ModelParams, test: Dataset) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class."""
    if len(test) == 0:
        raise DomainError("empty test set")
    probs = nn.forward_batch(model, test.x)
    return float((probs.argmax(axis=1) == test.y).mean())


def eval_ba(model: nn.ModelParams, triggered: Dataset, target_class: int) -> float:
    """Fraction of triggered samples predicted as the attacker's target."""
    if len(triggered) == 0:
        raise DomainError("empty triggered test set")
    probs = nn.forward_batch(model, triggered.x)
    return float((probs.argmax(axis=1) == target_class).mean())


def eval_detection(queue_client_ids, trust_ledger: ledger.TrustLedger, attacker_ids):
    """(TPR, TNR) over the round's queue, flagging trust strictly below 1/2."""
    if not queue_client_ids:
        raise DomainError("empty queue")
    attackers = set(attacker_ids)
    flagged = {cid for cid in queue_client_ids if trust_ledger.trust(cid) < 0.5}
    queue_attackers = [cid for cid in queue_client_ids if cid in attackers]
    queue_benign = [cid for cid in queue_client_ids if cid not in attackers]
    tpr = None
    tnr = None
    if queue_attackers:
        tpr = sum(1 for cid in queue_attackers if cid in flagged) / len(queue_attackers)
    if queue_benign:
        tnr = sum(1 for cid in queue_benign if cid not in flagged) / len(queue_benign)
    return tpr, tnr


def _load_data(cfg: SimConfig):
    if cfg.data_csv is not None:
        full = load_csv(cfg.data_csv)
        rng = np.random.default_rng(derive_seed(cfg.seed, "csv_split"))
        order = rng.permutation(len(full))
        n_test = max(1, int(round(cfg.test_fraction * len(full))))
        test = full.subset(order[:n_test])
        pool = full.subset(order[n_test:])
        return pool, test
    pool_size = int(math.ceil(cfg.pool_factor * cfg.n_clients * cfg.per_client_size))
    pool = gen_dataset(pool_size, cfg.n_classes, cfg.n_features,
                       derive_seed(cfg.seed, "trainpool"), cfg.data_separation)
    test = gen_dataset(cfg.test_size, cfg.n_classes, cfg.n_features,
                       derive_seed(cfg.seed, "test"), cfg.data_separation)
    return pool, test


def _pick_attackers(cfg: SimConfig):
    count = int(round(cfg.attacker_ratio * cfg.n_clients))
    if count == 0:
        return frozenset()
    rng = np.random.default_rng(derive_seed(cfg.seed, "attackers"))
    return frozenset(int(c) for c in rng.choice(cfg.n_clients, size=count, replace=False))


def _verifier_population(cfg: SimConfig, attackers):
    """Open verifier pool and its dishonest members.

    The adversary's clients always verify dishonestly.  When the configured
    dishonest fraction exceeds the attacker ratio, non-client outsider
    identities join the open pool to make up the difference; outsiders never
    submit models, so the client-as-a-verifier policy screens them out by
    construction.  When the fraction is below the attacker ratio, a seeded
    subset of the compromised clients misbehaves as verifiers.
    """
    p = cfg.bad_verifier_fraction
    clients = list(range(cfg.n_clients))
    if p == 0.0:
        return clients, frozenset()
    n_att = len(attackers)
    want = p * cfg.n_clients
    if want <= n_att:
        rng = np.random.default_rng(derive_seed(cfg.seed, "bad_verifiers"))
        count = max(1, int(round(want)))
        bad = rng.choice(sorted(attackers), size=min(count, n_att), replace=False)
        return clients, frozenset(int(c) for c in bad)
    # outsider count o solves (n_att + o) / (n_clients + o) = p
    outsiders = int(round((p * cfg.n_clients - n_att) / (1.0 - p))) if p < 1.0 else cfg.n_clients
    outsider_ids = list(range(cfg.n_clients, cfg.n_clients + outsiders))
    return clients + outsider_ids, frozenset(attackers) | frozenset(outsider_ids)


def _measure_pgd_delta(cfg: SimConfig, profiles, global_model) -> float:
    """0.8 times the median benign update norm on a throwaway warm-up round."""
    norms = []
    base = nn.flatten(global_model)
    for profile in profiles:
        if profile.is_malicious:
            continue
        warm_cfg = nn.TrainConfig(cfg.learning_rate, cfg.local_epochs, cfg.batch_size,
                                  derive_seed(cfg.seed, "warmup", profile.client_id))
        trained = nn.sgd_train(global_model, profile.data.x, profile.data.y, warm_cfg)
        norms.append(float(np.linalg.norm(nn.flatten(trained) - base)))
    if not norms:
        raise ConfigError("cannot calibrate pgd_delta without benign clients")
    return 0.8 * float(np.median(norms))


def run(cfg: SimConfig) -> RunResult:
    """Execute the configured number of rounds and collect per-round metrics."""
    cfg.validate()
    master = cfg.seed
    pool, test = _load_data(cfg)
    parts = partition_non_iid(pool, PartitionSpec(
        cfg.n_clients, cfg.non_iid_degree, cfg.per_client_size,
        derive_seed(master, "partition")))
    attackers = _pick_attackers(cfg)
    verifier_pool, bad_verifiers = _verifier_population(cfg, attackers)
    poison_spec = PoisonSpec(cfg.target_class, cfg.trigger_coords, cfg.trigger_value,
                             cfg.poison_rate, cfg.edge_case)
    profiles = []
    for cid in range(cfg.n_clients):
        if cid in attackers:
            profiles.append(ClientProfile(cid, parts[cid], Attack(cfg.attack), poison_spec))
        else:
            profiles.append(ClientProfile(cid, parts[cid]))
    triggered = triggered_testset(test, poison_spec)

    global_model = nn.init_mlp(test.n_features, cfg.hidden_width, test.n_classes,
                               derive_seed(master, "init"))
    if cfg.warm_start_size > 0 and cfg.data_csv is None:
        # Pre-train on a held-out seeded set so the run starts near the main
        # task's optimum: clients then report drift-scale gradients while a
        # poisoned objective keeps producing large coordinated ones.
        warm = gen_dataset(cfg.warm_start_size, cfg.n_classes, cfg.n_features,
                           derive_seed(master, "warm_start"), cfg.data_separation)
        warm_cfg = nn.TrainConfig(0.1, cfg.warm_start_epochs, 64,
                                  derive_seed(master, "warm_start_train"))
        global_model = nn.sgd_train(global_model, warm.x, warm.y, warm_cfg)
    store = ledger.OffchainStore()
    state = ledger.ContractState(cfg.queue_size, store.put(nn.to_bytes(global_model)))
    trust = ledger.TrustLedger()
    trust.register(range(cfg.n_clients))

    attack_params = None
    if cfg.attack in (Attack.PGD.value, Attack.PGD_MR.value) and attackers:
        delta = cfg.pgd_delta if cfg.pgd_delta is not None else _measure_pgd_delta(cfg, profiles, global_model)
        gamma = cfg.replace_gamma if cfg.replace_gamma is not None else float(cfg.queue_size)
        attack_params = AttackParams(gamma=gamma, delta=delta)

    metrics = []
    pending_reports = []   # (apply_at_round, reports) when verify_lag > 0
    benign_zero_rounds = []
    for t in range(1, cfg.rounds + 1):
        started = time.perf_counter()
        state.round_counter = t
        rng = np.random.default_rng(derive_seed(master, "round", t, "sample"))
        sampled = sorted(int(c) for c in rng.choice(cfg.n_clients, size=cfg.queue_size, replace=False))
        submissions = {}
        for cid in sampled:
            train_cfg = nn.TrainConfig(cfg.learning_rate, cfg.local_epochs, cfg.batch_size,
                                       derive_seed(master, "round", t, "client", cid))
            sub = local_round(profiles[cid], global_model, train_cfg, t, attack_params)
            store.put(nn.to_bytes(sub.model))
            ledger.submit(state, store, sub)
            submissions[cid] = sub

        if cfg.defense_enabled:
            mset = ledger.select_verification_set(state, trust, cfg.verify_set_size,
                                                  derive_seed(master, "round", t, "mset"))
            verifiers = ledger.select_verifiers(state, trust, cfg.n_verifiers, cfg.verifier_policy,
                                                derive_seed(master, "round", t, "verifiers"),
                                                open_pool=verifier_pool)
            reports = []
            saw_benign_zero = False
            if verifiers:
                assignment = defense.assign_clients_to_verifiers(
                    mset, verifiers, cfg.verify_subset_size,
                    derive_seed(master, "round", t, "assign"))
                snapshot = trust.snapshot()
                for vid in sorted(assignment):
                    task = defense.make_task(vid, [submissions[c] for c in assignment[vid]],
                                             global_model, cfg.learning_rate, snapshot, t)
                    report = defense.verify(task)
                    saw_benign_zero = saw_benign_zero or any(
                        s == 0.0 and cid not in attackers for cid, s in report.scores.items())
                    if cfg.force_unit_scores:
                        report = defense.ScoreReport(vid, {c: 1.0 for c in report.scores}, t)
                    elif vid in bad_verifiers:
                        report = defense.corrupt_report(report, cfg.bad_verifier_mode,
                                                        derive_seed(master, "round", t, "corrupt", vid))
                    state.log(ledger.SCORES_RECEIVED, client_id=vid)
                    reports.append(report)
            benign_zero_rounds.append(saw_benign_zero)
            pending_reports.append((t + cfg.verify_lag, reports))
            while pending_reports and pending_reports[0][0] <= t:
                _, due = pending_reports.pop(0)
                for report in due:
                    for cid in sorted(report.scores):
                        trust.update(cid, report.scores[cid])
            try:
                global_model = ledger.aggregate(state, trust, store)
            except DegenerateAggregationError:
                pass  # keep the previous global model
        else:
            global_model = ledger.fedavg_aggregate(state, store)

        ma = eval_ma(global_model, test)
        ba = eval_ba(global_model, triggered, cfg.target_class) if len(triggered) else 0.0
        tpr, tnr = eval_detection(sampled, trust, attackers)
        metrics.append(RoundMetrics(t, ma, ba, tpr, tnr, time.perf_counter() - started))

    final = metrics[-1]
    wall = [m.wall_time for m in metrics]
    summary = {
        "config": cfg.to_dict(),
        "rounds": cfg.rounds,
        "final_ma": final.ma,
        "final_ba": final.ba,
        "final_tpr": final.tpr,
        "final_tnr": final.tnr,
        "mean_round_time": float(np.mean(wall)),
        "seed": cfg.seed,
        "attackers": sorted(attackers),
        "bad_verifiers": sorted(bad_verifiers),
    }
    diagnostics = {
        "benign_zero_rounds": benign_zero_rounds,
        "attackers": attackers,
        "bad_verifiers": bad_verifiers,
        "attack_params": attack_params,
    }
    return RunResult(cfg, metrics, summary, global_model, state, trust, diagnostics)


def emit(result: RunResult, out_dir) -> dict:
    """Write per-round metrics as CSV plus a JSON summary; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "metrics.csv"
    with csv_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["round", "ma", "ba", "tpr", "tnr", "wall_time"])
        for m in result.metrics:
            writer.writerow([
                m.round_index,
                f"{m.ma:.10g}",
                f"{m.ba:.10g}",
                "" if m.tpr is None else f"{m.tpr:.10g}",
                "" if m.tnr is None else f"{m.tnr:.10g}",
                f"{m.wall_time:.6g}",
            ])
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    events_path = out / "events.jsonl"
    events_path.write_text("\n".join(ledger.export_events(result.state)) + "\n")
    return {"metrics": csv_path, "summary": summary_path, "events": events_path}


def time_verify_cost(task_size: int, repeats: int = 50, seed: int = 0) -> float:
    """Mean seconds to verify one task of ``task_size`` synthetic clients.

    Used to check that per-verifier cost scales with the subset size rather
    than with the whole verification set.
    """
    rng = np.random.default_rng(seed)
    n_classes, width = 5, 32
    members = []
    for cid in range(task_size):
        members.append(defense.TaskClient(
            client_id=cid,
            du=rng.standard_normal((n_classes, width)),
            db=rng.standard_normal(n_classes),
            data_size=200,
            u_local=rng.standard_normal((n_classes, width)),
        ))
    trust_map = {cid: 1.0 for cid in range(task_size)}
    task = defense.VerificationTask(0, tuple(members), 1, trust_map)
    defense.verify(task)  # warm up
    started = time.perf_counter()
    for _ in range(repeats):
        defense.verify(task)
    return (time.perf_counter() - started) / repeats

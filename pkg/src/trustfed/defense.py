"""Verifier-side scoring of reported ultimate gradients.

Two independent filters each nominate a suspicious subset of the task's
clients:

* Gradient-similarity filter.  Compares each client's reported gradient
  against the size-weighted crowd: ``a_i`` is the cosine between the client's
  gradient deviation from the cohort mean and the mean gradient direction.
  After min-max scaling, clients strictly above the (lower) median are
  suspects: colluding clients share their strongest gradient component, so
  their deviations over-align with the crowd mean while honest heterogeneous
  clients scatter.
* By-class clustering filter.  Summarizes every gradient by its per-class row
  sums, embeds clients by their mutual L2 distances, splits them with a
  deterministic 2-means, and suspects the cluster containing the least
  trusted client (ties by lowest id).

A client in both sets scores 0, in neither scores 1, otherwise 1/2.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import DomainError
from .ledger import VALID_SCORES

__all__ = [
    "TaskClient",
    "VerificationTask",
    "ScoreReport",
    "make_task",
    "filter_gradient_similarity",
    "filter_byclass_kmeans",
    "combine_scores",
    "verify",
    "corrupt_report",
    "assign_clients_to_verifiers",
]

KMEANS_MAX_ITER = 100


@dataclass(frozen=True)
class TaskClient:
    """One client's reported data as seen by a verifier."""

    client_id: int
    du: np.ndarray
    db: np.ndarray
    data_size: int
    u_local: np.ndarray  # ultimate weights reconstructed from the global model


@dataclass(frozen=True)
class VerificationTask:
    verifier_id: int
    clients: tuple
    round_index: int
    trust: dict

    def __post_init__(self):
        ordered = tuple(sorted(self.clients, key=lambda c: c.client_id))
        object.__setattr__(self, "clients", ordered)
        ids = [c.client_id for c in ordered]
        if len(set(ids)) != len(ids):
            raise DomainError("duplicate client in verification task")
        for c in ordered:
            if c.client_id not in self.trust:
                raise DomainError(f"missing trust snapshot for client {c.client_id}")

    def client_ids(self):
        return tuple(c.client_id for c in self.clients)


@dataclass(frozen=True)
class ScoreReport:
    verifier_id: int
    scores: dict
    round_index: int

    def __post_init__(self):
        for s in self.scores.values():
            if s not in VALID_SCORES:
                raise DomainError(f"score {s} outside {VALID_SCORES}")


def make_task(verifier_id, submissions, global_model, learning_rate, trust, round_index) -> VerificationTask:
    """Build a task from submissions, reconstructing each client's ultimate weights.

    Verifiers only download gradients, but the similarity filter needs the
    weights themselves; ``U_local = U_global - lr * dU`` recovers them exactly
    from the public global model.
    """
    u_global, _ = global_model.ultimate()
    members = []
    for sub in submissions:
        members.append(TaskClient(
            client_id=sub.client_id,
            du=sub.ug.du,
            db=sub.ug.db,
            data_size=sub.data_size,
            u_local=u_global - learning_rate * sub.ug.du,
        ))
    return VerificationTask(verifier_id, tuple(members), round_index, dict(trust))


def _size_weighted_mean(arrays, sizes):
    total = float(np.sum(sizes))
    out = np.zeros_like(arrays[0])
    for arr, w in zip(arrays, sizes):
        out += (w / total) * arr
    return out


def filter_gradient_similarity(task: VerificationTask) -> frozenset:
    """Suspects by over-alignment with the crowd's mean gradient direction.

    The offset is taken as ``U_* - U_i``: since every client trains away from
    the same global weights, that offset points exactly along the client's
    gradient deviation from the cohort mean, and a score that is high for
    coordinated updates requires this orientation.
    """
    clients = task.clients
    if len(clients) < 2:
        raise DomainError("similarity filter needs at least two clients")
    sizes = [c.data_size for c in clients]
    u_mean = _size_weighted_mean([c.u_local for c in clients], sizes)
    g_mean = _size_weighted_mean([c.du for c in clients], sizes)
    g_norm = float(np.linalg.norm(g_mean))
    if g_norm == 0.0:
        return frozenset()
    g_unit = g_mean / g_norm
    scores = []
    for c in clients:
        diff = u_mean - c.u_local
        norm = float(np.linalg.norm(diff))
        # Elementwise product + sum instead of a BLAS dot: fused multiply-adds
        # would break the exact symmetry ties the degenerate cases rely on.
        scores.append(0.0 if norm == 0.0 else float(((diff / norm) * g_unit).sum()))
    scores = np.array(scores)
    span = scores.max() - scores.min()
    if span == 0.0:
        return frozenset()
    scaled = (scores - scores.min()) / span
    median = np.sort(scaled)[(len(clients) - 1) // 2]
    return frozenset(c.client_id for c, a in zip(clients, scaled) if a > median)


def _two_means(features, ids):
    """Deterministic 2-means: seed with the farthest pair, cap the iterations.

    Returns a boolean membership array for the cluster seeded by the lower id
    of the pair, or ``None`` when one cluster ends up empty.  Ties everywhere
    break toward that same cluster, so reordering the input cannot change the
    split.
    """
    n = len(ids)
    dists = np.linalg.norm(features[:, None, :] - features[None, :, :], axis=2)
    best = None
    for i in range(n):
        for j in range(i + 1, n):
            key = (-dists[i, j], min(ids[i], ids[j]), max(ids[i], ids[j]))
            if best is None or key < best[0]:
                best = (key, i, j)
    _, i, j = best
    if dists[i, j] == 0.0:
        return None
    a, b = (i, j) if ids[i] < ids[j] else (j, i)
    center_a, center_b = features[a].copy(), features[b].copy()
    member_a = np.zeros(n, dtype=bool)
    for _ in range(KMEANS_MAX_ITER):
        da = np.linalg.norm(features - center_a, axis=1)
        db = np.linalg.norm(features - center_b, axis=1)
        new_a = da <= db
        if new_a.all() or not new_a.any():
            return None
        if (new_a == member_a).all():
            break
        member_a = new_a
        center_a = features[member_a].mean(axis=0)
        center_b = features[~member_a].mean(axis=0)
    return member_a


def filter_byclass_kmeans(task: VerificationTask) -> frozenset:
    """Suspects by clustering the by-class gradient summaries.

    Each client's feature vector holds its L2 distances to every task member
    (self-distance zero included).  The suspicious cluster is the one holding
    the client with the lowest trust in the snapshot, ties by lowest id.
    """
    clients = task.clients
    if len(clients) < 2:
        raise DomainError("clustering filter needs at least two clients")
    mus = [
        nn.by_class_gradient(nn.UltimateGradient(c.du, c.db, c.client_id, task.round_index))
        for c in clients
    ]
    mus = np.array(mus)
    features = np.linalg.norm(mus[:, None, :] - mus[None, :, :], axis=2)
    ids = [c.client_id for c in clients]
    member_a = _two_means(features, ids)
    if member_a is None:
        return frozenset()
    anchor_pos = min(range(len(clients)), key=lambda k: (task.trust[ids[k]], ids[k]))
    suspicious = member_a if member_a[anchor_pos] else ~member_a
    return frozenset(ids[k] for k in range(len(clients)) if suspicious[k])


def combine_scores(s1: frozenset, s2: frozenset, client_ids) -> dict:
    """0 for clients in both sets, 1 for clients in neither, 1/2 otherwise."""
    scores = {}
    for cid in client_ids:
        if cid in s1 and cid in s2:
            scores[cid] = 0.0
        elif cid not in s1 and cid not in s2:
            scores[cid] = 1.0
        else:
            scores[cid] = 0.5
    return scores


def verify(task: VerificationTask) -> ScoreReport:
    """Run both filters and combine them into a per-client score report."""
    s1 = filter_gradient_similarity(task)
    s2 = filter_byclass_kmeans(task)
    return ScoreReport(task.verifier_id, combine_scores(s1, s2, task.client_ids()), task.round_index)


def corrupt_report(report: ScoreReport, mode: str, seed: int) -> ScoreReport:
    """Dishonest-verifier transforms: seeded uniform scores, or 0 <-> 1 swaps."""
    if mode == "random":
        rng = np.random.default_rng(seed)
        scores = {
            cid: float(rng.choice(VALID_SCORES))
            for cid in sorted(report.scores)
        }
    elif mode == "reverse":
        scores = {cid: 1.0 - s for cid, s in report.scores.items()}
    else:
        raise DomainError(f"unknown corruption mode {mode!r}")
    return ScoreReport(report.verifier_id, scores, report.round_index)


def assign_clients_to_verifiers(verification_set, verifier_ids, subset_size: int, seed: int) -> dict:
    """Give each verifier an independent uniform subset of the verification set.

    Subsets may overlap across verifiers; a client scored several times simply
    receives several trust updates, applied in verifier-id order.
    """
    members = sorted(int(c) for c in verification_set)
    if subset_size < 1 or subset_size > len(members):
        raise DomainError(
            f"subset size {subset_size} out of range for {len(members)} clients"
        )
    rng = np.random.default_rng(seed)
    assignment = {}
    for vid in sorted(int(v) for v in verifier_ids):
        chosen = rng.choice(members, size=subset_size, replace=False)
        assignment[vid] = tuple(sorted(int(c) for c in chosen))
    return assignment

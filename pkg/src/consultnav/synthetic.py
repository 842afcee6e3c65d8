"""Deterministic synthetic corpora for tests, demos, and offline evaluation.

Two generators:

* a cyclic corpus where every symptom has one fixed successor — the
  Bayes-optimal next-inquiry policy is exact, so it pins down learnability;
* a clustered corpus that mimics consultation structure: each case belongs to
  a symptom cluster, opens with the cluster head, walks its critical symptoms
  in a seeded order, then associated symptoms. Transitions within a cluster
  are predictable, which is exactly the signal the navigator is meant to
  exploit.

Both are pure functions of their seed.
"""

from __future__ import annotations

import numpy as np

from .domain import CaseSequence


def make_cyclic_corpus(
    n_symbols: int,
    n_cases: int = 200,
    case_length: int = 10,
    seed: int = 0,
    permuted: bool = True,
) -> list[CaseSequence]:
    """Every symptom is always followed by one fixed successor."""
    rng = np.random.default_rng(seed)
    if permuted:
        successor = rng.permutation(n_symbols)
    else:
        successor = (np.arange(n_symbols) + 1) % n_symbols
    cases = []
    for c in range(n_cases):
        s = int(rng.integers(n_symbols))
        seq = [s]
        for _ in range(case_length - 1):
            s = int(successor[s])
            seq.append(s)
        cases.append(
            CaseSequence(
                case_id=f"cyclic-{c:04d}",
                symptoms=tuple(seq),
                gold_critical=frozenset(seq[: case_length // 2]),
                gold_all=frozenset(seq),
            )
        )
    return cases


def make_clustered_corpus(
    n_symbols: int = 83,
    n_cases: int = 120,
    n_clusters: int = 8,
    n_critical: int = 3,
    n_associated: int = 5,
    seed: int = 0,
) -> list[CaseSequence]:
    """Cluster-structured consultations with per-case gold symptom sets.

    Symptoms [0, n_clusters) are reserved as globally common "generic"
    symptoms that also appear in sequences, so corpus frequency alone is a
    poor guide to what matters for a given case.
    """
    cluster_size = n_critical + n_associated
    # Cluster layout is a fixed function of the symptom count, not of the
    # corpus seed, so train and eval corpora share the same syndrome structure.
    layout_rng = np.random.default_rng(n_symbols)
    specific = np.arange(n_clusters, n_symbols)
    clusters = np.array_split(layout_rng.permutation(specific), n_clusters)
    for members in clusters:
        if len(members) < cluster_size:
            raise ValueError(
                f"cluster of {len(members)} symptoms cannot hold {cluster_size} gold symptoms"
            )
    # Each cluster has one canonical inquiry order: criticals first, then
    # associated symptoms. Cases follow it with light per-case perturbation.
    canonical = [list(map(int, members[:cluster_size])) for members in clusters]

    rng = np.random.default_rng(seed)
    cases = []
    for c in range(n_cases):
        cluster_id = int(rng.integers(n_clusters))
        order = list(canonical[cluster_id])
        swap = int(rng.integers(1, cluster_size - 1))
        if rng.random() < 0.4:
            order[swap], order[swap + 1] = order[swap + 1], order[swap]
        critical = [s for s in canonical[cluster_id][:n_critical]]
        associated = [s for s in canonical[cluster_id][n_critical:]]
        generic = [int(rng.integers(n_clusters)) for _ in range(2)]
        sequence = [*order[:n_critical], generic[0], *order[n_critical:], generic[1]]

        cases.append(
            CaseSequence(
                case_id=f"clustered-{c:04d}",
                symptoms=tuple(sequence),
                gold_critical=frozenset(critical),
                gold_all=frozenset(critical) | frozenset(associated),
                metadata={"cluster": str(cluster_id)},
            )
        )
    return cases

"""Shared fixtures. Heavyweight artifacts (trained navigator) are session-scoped."""

import pytest

from consultnav.config import DEFAULT_VOCABULARY
from consultnav.domain import SymptomVocabulary, load_vocabulary
from consultnav.policy import PolicyConfig
from consultnav.synthetic import make_clustered_corpus
from consultnav.training import TrainingConfig, train
from consultnav.transitions import fit_transitions


def toy_vocabulary(n: int) -> SymptomVocabulary:
    return SymptomVocabulary.from_entries([(i, f"symptom {i}", []) for i in range(n)])


@pytest.fixture(scope="session")
def default_vocab():
    return load_vocabulary(DEFAULT_VOCABULARY)


@pytest.fixture(scope="session")
def clustered_train():
    return make_clustered_corpus(n_symbols=83, n_cases=160, seed=5)


@pytest.fixture(scope="session")
def clustered_eval():
    return make_clustered_corpus(n_symbols=83, n_cases=40, seed=99)


@pytest.fixture(scope="session")
def clustered_transitions(clustered_train):
    return fit_transitions(clustered_train, 83, alpha=1.0)


@pytest.fixture(scope="session")
def trained_navigator(clustered_train, default_vocab):
    policy_cfg = PolicyConfig(
        n_symbols=83, embed_dim=32, n_layers=1, n_heads=4, ff_dim=64, max_window=6, seed=1
    )
    train_cfg = TrainingConfig(objective="BC", epochs=15, seed=2)
    params, _ = train(clustered_train, default_vocab, None, policy_cfg, train_cfg)
    return params

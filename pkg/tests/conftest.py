"""Shared fixtures: seeded synthetic sources and small FASTQ inputs."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.core.seqio import dataset_from_sequences  # noqa: E402


def markov_sequence(rng: np.random.Generator, transitions: np.ndarray, length: int) -> np.ndarray:
    """Order-1 Markov chain with a uniformly drawn first symbol."""
    m = transitions.shape[0]
    cumulative = np.cumsum(transitions, axis=1)
    draws = rng.random(length)
    out = np.empty(length, dtype=np.int64)
    state = int(rng.integers(0, m))
    for i in range(length):
        out[i] = state
        state = min(int(np.searchsorted(cumulative[state], draws[i], side="right")), m - 1)
    return out


def stationary(transitions: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eig(transitions.T)
    pi = np.real(vectors[:, np.argmin(np.abs(values - 1.0))])
    return pi / pi.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def sticky_transitions():
    return np.array([
        [0.70, 0.10, 0.10, 0.10],
        [0.10, 0.70, 0.10, 0.10],
        [0.05, 0.05, 0.80, 0.10],
        [0.20, 0.20, 0.20, 0.40],
    ])


@pytest.fixture
def markov_dataset(rng, sticky_transitions):
    """200 reads of length 100 from an order-1 source over four symbols."""
    reads = [markov_sequence(rng, sticky_transitions, 100) for _ in range(200)]
    return dataset_from_sequences(reads, 4)


@pytest.fixture
def two_population_dataset(rng):
    """Reads from two sources with opposite symbol preferences; labels alongside."""
    first = np.array([0.70, 0.10, 0.10, 0.10])
    second = np.array([0.10, 0.10, 0.10, 0.70])
    reads, labels = [], []
    for index in range(120):
        label = index % 2
        reads.append(rng.choice(4, size=100, p=first if label == 0 else second))
        labels.append(label)
    return dataset_from_sequences(reads, 4), np.array(labels)


@pytest.fixture
def fastq_dataset(rng):
    """Bases plus qualities drawn from a small set of scores, with empty and short reads."""
    lengths = [0, 1, 2, 3, 5] + [60] * 40
    bases = [rng.integers(0, 4, n) for n in lengths]
    scores = np.array([2, 12, 25, 30, 37, 40])
    qualities = [scores[np.minimum(rng.geometric(0.5, n) - 1, len(scores) - 1)] for n in lengths]
    return dataset_from_sequences(bases, 4, qualities)


@pytest.fixture
def fastq_bytes():
    return (b"@read1 lane=1\nACGTN\n+\nII#!5\n"
            b"@read2\nacgt\n+\n!!!!\n"
            b"@empty\n\n+\n\n")

"""Nearest vocabulary words for each trained measurement state."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import ParamSet

log = logging.getLogger(__name__)


@dataclass
class Neighbor:
    token_id: int
    word: str
    distance: float


@dataclass
class NeighborList:
    measurement: int
    neighbors: list[Neighbor]


def word_states(params: ParamSet) -> np.ndarray:
    """Complex word vectors, one row per vocabulary id."""
    return (params.R * np.exp(1j * params.Phi)).T


def distances(params: ParamSet, metric: str = "modulus") -> np.ndarray:
    """(k, |V|) distances between measurement states and words.

    ``modulus``: ``sqrt(2 - 2 |<v|w>|)``, blind to a global phase on either side.
    ``euclidean``: plain distance between the stacked (real, imaginary) vectors.
    """
    V = params.measurement_states()
    Wd = word_states(params)
    if metric == "modulus":
        overlap = np.abs(V.conj() @ Wd.T)
        return np.sqrt(np.clip(2.0 - 2.0 * overlap, 0.0, None))
    if metric == "euclidean":
        a = np.concatenate([V.real, V.imag], axis=1)
        b = np.concatenate([Wd.real, Wd.imag], axis=1)
        sq = (a**2).sum(1)[:, None] + (b**2).sum(1)[None, :] - 2 * a @ b.T
        return np.sqrt(np.clip(sq, 0.0, None))
    raise ValueError(f"unknown metric {metric!r}")


def nearest_words(params: ParamSet, itos: list[str], top: int = 10, metric: str = "modulus") -> list[NeighborList]:
    """Top-``top`` words per measurement by brute-force scan; ties go to the lower id."""
    if top < 1:
        raise ValueError("top must be >= 1")
    if top > len(itos):
        log.warning("top=%d exceeds vocabulary size %d; clamping", top, len(itos))
        top = len(itos)
    D = distances(params, metric)
    out = []
    for j, row in enumerate(D):
        order = np.argsort(row, kind="stable")[:top]
        out.append(NeighborList(j, [Neighbor(int(i), itos[i], float(row[i])) for i in order]))
    return out

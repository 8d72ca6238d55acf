"""Embedding, mixture, measurement and dense layers.

Sentences are handled at their natural length.  A batch is flattened into one
token axis with a start offset per sentence, so every per-sentence reduction
is an ``np.add.reduceat`` over contiguous segments.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .shs import PolarState, TOL, born_probability_factored, mix, wrap_phase


class Variant(str, Enum):
    FULL = "full"
    REAL_DOUBLE_DIM = "real-double-dim"
    FIXED_AMPLITUDE = "fixed-amplitude"
    MEAN_WEIGHTS = "mean-weights"
    IDF_WEIGHTS = "idf-weights"
    FIXED_ORTHOGONAL_PROJECTORS = "fixed-orthogonal-projectors"
    DENSE_ON_RHO = "dense-on-rho"

    def __str__(self) -> str:
        return self.value


PARAM_NAMES = ("R", "Phi", "Pi", "V_amp", "V_phase", "W", "b")

FROZEN: dict[Variant, frozenset[str]] = {
    Variant.FULL: frozenset(),
    Variant.REAL_DOUBLE_DIM: frozenset({"Phi", "Pi", "V_amp", "V_phase"}),
    Variant.FIXED_AMPLITUDE: frozenset({"R"}),
    Variant.MEAN_WEIGHTS: frozenset({"Pi"}),
    Variant.IDF_WEIGHTS: frozenset({"Pi"}),
    Variant.FIXED_ORTHOGONAL_PROJECTORS: frozenset({"V_amp", "V_phase"}),
    Variant.DENSE_ON_RHO: frozenset({"V_amp", "V_phase"}),
}


@dataclass
class ParamSet:
    """All trainable tables.

    ``R`` and ``Phi`` are ``n x |V|`` (one column per word), ``V_amp`` and
    ``V_phase`` are ``k x n`` (one row per measurement state), ``W`` maps the
    feature vector onto ``|L|`` logits.  For the real-valued baseline ``R``
    holds signed ``d x |V|`` word vectors and the complex tables are unused.
    """

    R: np.ndarray
    Phi: np.ndarray
    Pi: np.ndarray
    V_amp: np.ndarray
    V_phase: np.ndarray
    W: np.ndarray
    b: np.ndarray

    @property
    def n(self) -> int:
        return self.Phi.shape[0]

    @property
    def k(self) -> int:
        return self.V_amp.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.Pi.shape[0]

    @property
    def n_labels(self) -> int:
        return self.b.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "ParamSet":
        return ParamSet(**{k: v.copy() for k, v in self.arrays().items()})

    def measurement_states(self) -> np.ndarray:
        return self.V_amp * np.exp(1j * self.V_phase)


def feature_dim(variant: Variant, n: int, k: int, real_dim: int | None = None) -> int:
    variant = Variant(variant)
    if variant is Variant.REAL_DOUBLE_DIM:
        return real_dim if real_dim is not None else 2 * n
    if variant is Variant.DENSE_ON_RHO:
        return 2 * n * n
    return k


def random_unit_states(rng: np.random.Generator, count: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows of non-negative unit amplitudes with uniform phases in [-pi, pi]."""
    amp = rng.uniform(0.0, 1.0, size=(count, n))
    amp /= np.linalg.norm(amp, axis=1, keepdims=True)
    phase = rng.uniform(-np.pi, np.pi, size=(count, n))
    return amp, phase


def random_orthonormal_states(rng: np.random.Generator, k: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    if k > n:
        raise ValueError(f"cannot build {k} orthonormal states in dimension {n}")
    z = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    q, _ = np.linalg.qr(z)
    rows = q.T
    amp = np.abs(rows)
    phase = np.where(amp > 0, np.angle(rows), 0.0)
    return amp, phase


def init_params(
    n: int,
    k: int,
    vocab_size: int,
    n_labels: int,
    variant: Variant | str = Variant.FULL,
    *,
    rng: np.random.Generator | int | None = None,
    amplitudes: np.ndarray | None = None,
    phase_offsets: np.ndarray | None = None,
    idf: np.ndarray | None = None,
    real_dim: int | None = None,
    init_scale: float = 0.05,
) -> ParamSet:
    """Seeded initialisation.

    Word amplitudes come from ``amplitudes`` (``n x |V|``, unit columns) when
    given, otherwise uniform draws normalised per column.  Phases are uniform
    in [-pi, pi]; ``phase_offsets`` is added on top (sign-into-phase
    initialisation).  ``Pi`` starts at zero so the first sentence weights are
    uniform.  For the IDF variant ``Pi`` is frozen at ``log(idf)`` which makes
    the in-sentence softmax exactly IDF-proportional.
    """
    variant = Variant(variant)
    rng = np.random.default_rng(rng)
    if min(n, k, vocab_size, n_labels) < 1:
        raise ValueError("n, k, vocab_size and n_labels must all be >= 1")

    if variant is Variant.REAL_DOUBLE_DIM:
        d = real_dim if real_dim is not None else 2 * n
        R = rng.uniform(-init_scale, init_scale, size=(d, vocab_size))
        Phi = np.zeros((n, vocab_size))
    else:
        if amplitudes is not None:
            R = np.array(amplitudes, dtype=float)
            if R.shape != (n, vocab_size):
                raise ValueError(f"amplitude table has shape {R.shape}, expected {(n, vocab_size)}")
        else:
            R = rng.uniform(0.0, 1.0, size=(n, vocab_size))
            R /= np.linalg.norm(R, axis=0, keepdims=True)
        Phi = rng.uniform(-np.pi, np.pi, size=(n, vocab_size))
        if phase_offsets is not None:
            Phi = wrap_phase(Phi + phase_offsets)

    Pi = np.zeros(vocab_size)
    if variant is Variant.IDF_WEIGHTS:
        if idf is None:
            raise ValueError("idf-weights variant needs an idf vector")
        idf = np.asarray(idf, dtype=float)
        if idf.shape != (vocab_size,) or np.any(idf <= 0):
            raise ValueError("idf must be a positive vector over the vocabulary")
        Pi = np.log(idf)

    if variant is Variant.FIXED_ORTHOGONAL_PROJECTORS:
        V_amp, V_phase = random_orthonormal_states(rng, k, n)
    else:
        V_amp, V_phase = random_unit_states(rng, k, n)

    fdim = feature_dim(variant, n, k, real_dim=R.shape[0] if variant is Variant.REAL_DOUBLE_DIM else None)
    W = rng.uniform(-init_scale, init_scale, size=(fdim, n_labels))
    b = rng.uniform(-init_scale, init_scale, size=n_labels)
    return ParamSet(R, Phi, Pi, V_amp, V_phase, W, b)


def count_parameters(params: ParamSet, variant: Variant | str = Variant.FULL) -> int:
    """Number of trainable scalars for ``variant``.

    For the full model this is ``k*2n + 2*n*|V| + |V| + k*|L| + |L|``.
    """
    frozen = FROZEN[Variant(variant)]
    return int(sum(a.size for name, a in params.arrays().items() if name not in frozen))


# ---------------------------------------------------------------- single-item API


def embed_word(token_id: int, params: ParamSet) -> PolarState:
    if not 0 <= token_id < params.vocab_size:
        raise IndexError(f"token id {token_id} outside vocabulary of size {params.vocab_size}")
    return PolarState(params.R[:, token_id], params.Phi[:, token_id])


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max())
    return z / z.sum()


def term_weights(token_ids: Sequence[int], params: ParamSet) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("empty sentence")
    return _softmax(params.Pi[ids])


def sentence_rho(token_ids: Sequence[int], params: ParamSet) -> np.ndarray:
    states = [embed_word(int(t), params) for t in token_ids]
    return mix(states, term_weights(token_ids, params))


def measure_sentence(token_ids: Sequence[int], params: ParamSet) -> np.ndarray:
    states = [embed_word(int(t), params) for t in token_ids]
    p = term_weights(token_ids, params)
    return np.array(
        [
            born_probability_factored(states, p, PolarState(params.V_amp[j], params.V_phase[j]))
            for j in range(params.k)
        ]
    )


def classify(q: np.ndarray, params: ParamSet) -> tuple[np.ndarray, np.ndarray]:
    q = np.asarray(q, dtype=float)
    logits = q @ params.W + params.b
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return logits, z / z.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------- batched forward


@dataclass
class ForwardCache:
    """Everything ``backward`` needs, for a batch of one or more sentences.

    Token-level arrays run over the flattened batch; ``starts`` gives each
    sentence's first position and ``seg`` the owning sentence of each token.
    """

    variant: Variant
    token_ids: list[np.ndarray]
    flat_ids: np.ndarray
    starts: np.ndarray
    lengths: np.ndarray
    seg: np.ndarray
    states: np.ndarray | None  # (T, n) complex word states
    weights: np.ndarray | None  # (T,) mixture weights
    overlaps: np.ndarray | None  # (T, k) <v_j|w_i>
    q: np.ndarray | None  # (B, k) measurement probabilities
    rho: np.ndarray | None  # (B, n, n) for dense-on-rho
    features: np.ndarray  # (B, F) input of the dense layer
    logits: np.ndarray
    probs: np.ndarray
    shapes: dict[str, tuple[int, ...]] = field(default_factory=dict)


def _segment_softmax(x: np.ndarray, starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    m = np.repeat(np.maximum.reduceat(x, starts), lengths)
    z = np.exp(x - m)
    return z / np.repeat(np.add.reduceat(z, starts), lengths)


def forward_batch(batch: Sequence[Sequence[int]], params: ParamSet, variant: Variant | str) -> ForwardCache:
    variant = Variant(variant)
    token_ids = [np.asarray(s, dtype=np.int64) for s in batch]
    lengths = np.array([len(s) for s in token_ids], dtype=np.int64)
    if lengths.size == 0 or np.any(lengths == 0):
        raise ValueError("empty sentence")
    flat = np.concatenate(token_ids)
    if flat.min() < 0 or flat.max() >= params.vocab_size:
        raise IndexError("token id outside vocabulary")
    starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
    seg = np.repeat(np.arange(lengths.size), lengths)

    states = weights = overlaps = q = rho = None
    if variant is Variant.REAL_DOUBLE_DIM:
        features = np.add.reduceat(params.R[:, flat].T, starts, axis=0) / lengths[:, None]
    else:
        states = params.R[:, flat].T * np.exp(1j * params.Phi[:, flat].T)
        if variant is Variant.MEAN_WEIGHTS:
            weights = 1.0 / np.repeat(lengths, lengths).astype(float)
        else:
            weights = _segment_softmax(params.Pi[flat], starts, lengths)
        if variant is Variant.DENSE_ON_RHO:
            n = params.n
            rho = np.empty((lengths.size, n, n), dtype=complex)
            for s, (a, m) in enumerate(zip(starts, lengths)):
                w = states[a : a + m]
                rho[s] = (w.T * weights[a : a + m]) @ w.conj()
            flat_rho = rho.reshape(lengths.size, n * n)
            features = np.concatenate([flat_rho.real, flat_rho.imag], axis=1)
        else:
            overlaps = states @ params.measurement_states().conj().T
            prob = overlaps.real**2 + overlaps.imag**2
            q = np.add.reduceat(weights[:, None] * prob, starts, axis=0)
            features = q

    logits, probs = classify(features, params)
    return ForwardCache(
        variant=variant,
        token_ids=token_ids,
        flat_ids=flat,
        starts=starts,
        lengths=lengths,
        seg=seg,
        states=states,
        weights=weights,
        overlaps=overlaps,
        q=q,
        rho=rho,
        features=features,
        logits=logits,
        probs=probs,
        shapes={name: a.shape for name, a in params.arrays().items()},
    )


def forward(token_ids: Sequence[int], params: ParamSet, variant: Variant | str = Variant.FULL) -> ForwardCache:
    """Forward pass for one sentence (a batch of size one)."""
    return forward_batch([token_ids], params, variant)


def predict(batch: Sequence[Sequence[int]], params: ParamSet, variant: Variant | str, chunk: int = 512) -> np.ndarray:
    out = []
    for i in range(0, len(batch), chunk):
        out.append(forward_batch(batch[i : i + chunk], params, variant).probs)
    return np.concatenate(out) if out else np.zeros((0, params.n_labels))


# ---------------------------------------------------------------- projection


def _unit_columns(A: np.ndarray, axis: int) -> None:
    np.maximum(A, 0.0, out=A)
    norms = np.linalg.norm(A, axis=axis, keepdims=True)
    dead = norms == 0
    if np.any(dead):
        fill = 1.0 / np.sqrt(A.shape[axis])
        if axis == 0:
            A[:, dead[0]] = fill
        else:
            A[dead[:, 0], :] = fill
        norms = np.where(dead, 1.0, norms)
    A /= norms


def _wrap_inplace(phi: np.ndarray) -> None:
    out = np.abs(phi) > np.pi
    if out.any():
        phi[out] = wrap_phase(phi[out])


def renormalize(
    params: ParamSet,
    variant: Variant | str = Variant.FULL,
    *,
    embeddings: bool = True,
    measurements: bool = True,
) -> ParamSet:
    """Project amplitudes back onto the unit sphere, in place.

    Negative amplitudes are clamped to 0 first; an all-zero column is reset
    to uniform ``1/sqrt(n)``.  Phases are wrapped to [-pi, pi].  The signed
    real table of the real-valued baseline is left untouched.
    """
    variant = Variant(variant)
    if embeddings and variant is not Variant.REAL_DOUBLE_DIM:
        _unit_columns(params.R, axis=0)
        _wrap_inplace(params.Phi)
    if measurements:
        _unit_columns(params.V_amp, axis=1)
        _wrap_inplace(params.V_phase)
    return params


def check_invariants(params: ParamSet, variant: Variant | str = Variant.FULL, tol: float = TOL.structural) -> None:
    variant = Variant(variant)
    if variant is not Variant.REAL_DOUBLE_DIM:
        if np.any(params.R < 0) or np.max(np.abs(np.linalg.norm(params.R, axis=0) - 1)) > tol:
            raise AssertionError("word amplitude columns are not unit vectors")
    if np.any(params.V_amp < 0) or np.max(np.abs(np.linalg.norm(params.V_amp, axis=1) - 1)) > tol:
        raise AssertionError("measurement states are not unit vectors")


__all__ = [
    "Variant",
    "FROZEN",
    "PARAM_NAMES",
    "ParamSet",
    "ForwardCache",
    "init_params",
    "count_parameters",
    "feature_dim",
    "embed_word",
    "term_weights",
    "sentence_rho",
    "measure_sentence",
    "classify",
    "forward",
    "forward_batch",
    "predict",
    "renormalize",
    "check_invariants",
    "random_unit_states",
    "random_orthonormal_states",
]

"""Loss, analytic gradients, finite-difference validation and Adam.

Complex intermediate gradients use the convention ``g = dL/dRe(z) + i dL/dIm(z)``.
For a word entry ``z = r e^{i phi}`` this gives ``dL/dr = Re(g e^{-i phi})`` and
``dL/dphi = r Im(g e^{-i phi})``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - optional accelerator
    numba = None

from .model import FROZEN, PARAM_NAMES, ForwardCache, ParamSet, Variant, forward_batch

LOG_FLOOR = 1e-12
# blocks carrying the L2 penalty; phases, term weights, measurements and bias are exempt
REGULARIZED = ("R", "W")


class DivergenceError(FloatingPointError):
    pass


@dataclass
class GradSet:
    dR: np.ndarray
    dPhi: np.ndarray
    dPi: np.ndarray
    dV_amp: np.ndarray
    dV_phase: np.ndarray
    dW: np.ndarray
    db: np.ndarray

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, "d" + name) for name in PARAM_NAMES}

    @classmethod
    def zeros_like(cls, params: ParamSet) -> "GradSet":
        return cls(*(np.zeros_like(a) for a in params.arrays().values()))


def cross_entropy(probabilities, label: int) -> float:
    p = np.asarray(probabilities, dtype=float)
    if not 0 <= label < p.shape[-1]:
        raise ValueError(f"label {label} outside 0..{p.shape[-1] - 1}")
    return float(-np.log(max(p[label], LOG_FLOOR)))


def batch_loss(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (probs.shape[0],):
        raise ValueError("one label per sentence expected")
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise ValueError("label id outside the label set")
    return -np.log(np.maximum(probs[np.arange(labels.size), labels], LOG_FLOOR))


def l2_penalty(params: ParamSet, variant: Variant | str, ratio: float) -> float:
    if ratio == 0:
        return 0.0
    frozen = FROZEN[Variant(variant)]
    return ratio * sum(float(np.sum(getattr(params, n) ** 2)) for n in REGULARIZED if n not in frozen)


def objective(batch, labels, params: ParamSet, variant: Variant | str, l2: float = 0.0) -> float:
    """Mean cross-entropy over the batch plus the L2 penalty."""
    cache = forward_batch(batch, params, variant)
    return float(batch_loss(cache.probs, labels).mean()) + l2_penalty(params, variant, l2)


def _scatter_columns(target: np.ndarray, ids: np.ndarray, rows: np.ndarray) -> None:
    # target is (d, |V|); rows is (T, d) with one row per token occurrence
    np.add.at(target.T, ids, rows)


def backward(cache: ForwardCache, labels, params: ParamSet, l2: float = 0.0) -> GradSet:
    """Gradient of mean cross-entropy (plus ``l2 * ||theta||^2``) for a forward cache."""
    if cache.shapes != {name: a.shape for name, a in params.arrays().items()}:
        raise ValueError("forward cache was produced with differently shaped parameters")
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    B = cache.probs.shape[0]
    if labels.shape != (B,):
        raise ValueError(f"{B} sentences but {labels.size} labels")
    if labels.min() < 0 or labels.max() >= params.n_labels:
        raise ValueError("label id outside the label set")
    variant = cache.variant
    frozen = FROZEN[variant]
    g = GradSet.zeros_like(params)

    G = cache.probs.copy()
    G[np.arange(B), labels] -= 1.0
    G /= B
    g.dW[...] = cache.features.T @ G
    g.db[...] = G.sum(axis=0)
    dfeat = G @ params.W.T

    ids, seg, starts, lengths = cache.flat_ids, cache.seg, cache.starts, cache.lengths

    if variant is Variant.REAL_DOUBLE_DIM:
        _scatter_columns(g.dR, ids, dfeat[seg] / lengths[seg, None])
    else:
        w = cache.states
        p = cache.weights
        if variant is Variant.DENSE_ON_RHO:
            n = params.n
            D = (dfeat[:, : n * n] + 1j * dfeat[:, n * n :]).reshape(B, n, n)
            gw = np.empty_like(w)
            dp = np.empty(p.shape)
            for s, (a, m) in enumerate(zip(starts, lengths)):
                ws = w[a : a + m]
                Dw = ws @ D[s].T
                dp[a : a + m] = np.sum(ws.conj() * Dw, axis=1).real
                gw[a : a + m] = p[a : a + m, None] * (Dw + ws @ D[s].conj())
        else:
            V = params.measurement_states()
            O = cache.overlaps
            dq = dfeat[seg]
            dp = np.sum((O.real**2 + O.imag**2) * dq, axis=1)
            GO = 2.0 * p[:, None] * dq * O
            gw = GO @ V
            if not {"V_amp", "V_phase"} <= frozen:
                gv = GO.conj().T @ w
                u = gv * np.exp(-1j * params.V_phase)
                g.dV_amp[...] = u.real
                g.dV_phase[...] = params.V_amp * u.imag

        phi = params.Phi[:, ids].T
        u = gw * np.exp(-1j * phi)
        if "R" not in frozen:
            _scatter_columns(g.dR, ids, u.real)
        if "Phi" not in frozen:
            _scatter_columns(g.dPhi, ids, params.R[:, ids].T * u.imag)
        if "Pi" not in frozen:
            mean_dp = np.add.reduceat(p * dp, starts)
            np.add.at(g.dPi, ids, p * (dp - mean_dp[seg]))

    if l2:
        for name in REGULARIZED:
            if name not in frozen:
                getattr(g, "d" + name)[...] += 2.0 * l2 * getattr(params, name)
    for name in frozen:
        getattr(g, "d" + name)[...] = 0.0
    return g


def loss_and_grad(batch, labels, params: ParamSet, variant: Variant | str, l2: float = 0.0):
    cache = forward_batch(batch, params, variant)
    loss = float(batch_loss(cache.probs, labels).mean()) + l2_penalty(params, variant, l2)
    return loss, backward(cache, labels, params, l2), cache


# ---------------------------------------------------------------- finite differences


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_block: str | None
    worst_index: tuple[int, ...] | None
    analytic: float
    numeric: float
    block_errors: dict[str, float] = field(default_factory=dict)
    frozen_nonzero: dict[str, float] = field(default_factory=dict)
    checked: int = 0

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol and not any(v > 0 for v in self.frozen_nonzero.values())


def finite_difference_check(
    params: ParamSet,
    example,
    epsilon: float = 1e-5,
    *,
    variant: Variant | str = Variant.FULL,
    l2: float = 0.0,
    grads: GradSet | None = None,
    max_coords: int = 5000,
    floor: float = 1e-9,
    rng: np.random.Generator | int | None = 0,
) -> GradCheckReport:
    """Compare ``backward`` with central differences of the objective.

    ``example`` is ``(token_ids, label)`` or ``(batch, labels)``.  Every
    trainable coordinate is checked when there are fewer than ``max_coords``,
    otherwise a seeded sample.  Frozen blocks are only checked for an exactly
    zero analytic gradient.  The relative error uses ``max(|a|, |f|, floor)``
    as denominator, so coordinates where both values sit below ``floor`` are
    judged on an absolute scale.  ``grads`` may be supplied to audit an externally
    computed gradient.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-7, 1e-3]")
    variant = Variant(variant)
    token_ids, label = example
    if np.ndim(label) == 0:
        batch, labels = [token_ids], np.array([label])
    else:
        batch, labels = token_ids, np.asarray(label)
    if grads is None:
        _, grads, _ = loss_and_grad(batch, labels, params, variant, l2)
    frozen = FROZEN[variant]
    ganalytic = grads.arrays()

    coords = [(name, idx) for name, a in params.arrays().items() if name not in frozen for idx in np.ndindex(a.shape)]
    if len(coords) >= max_coords:
        pick = np.random.default_rng(rng).choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in np.sort(pick)]

    work = params.copy()
    arrays = work.arrays()
    report = GradCheckReport(0.0, None, None, 0.0, 0.0)
    for name in frozen:
        report.frozen_nonzero[name] = float(np.max(np.abs(ganalytic[name]), initial=0.0))
    for name, idx in coords:
        a = arrays[name]
        old = a[idx]
        a[idx] = old + epsilon
        up = objective(batch, labels, work, variant, l2)
        a[idx] = old - epsilon
        down = objective(batch, labels, work, variant, l2)
        a[idx] = old
        num = (up - down) / (2 * epsilon)
        ana = float(ganalytic[name][idx])
        rel = abs(ana - num) / max(abs(ana), abs(num), floor)
        report.block_errors[name] = max(report.block_errors.get(name, 0.0), rel)
        if rel > report.max_rel_error or report.worst_block is None:
            report.max_rel_error = rel
            report.worst_block, report.worst_index = name, tuple(int(i) for i in idx)
            report.analytic, report.numeric = ana, num
        report.checked += 1
    return report


# ---------------------------------------------------------------- Adam


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    scratch: dict[str, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def for_params(cls, params: ParamSet, **hyper) -> "OptimizerState":
        state = cls(**hyper)
        for name, a in params.arrays().items():
            state.m[name] = np.zeros_like(a)
            state.v[name] = np.zeros_like(a)
        return state


def _adam_numpy(theta, gr, m, v, tmp, b1, b2, step_size, vscale, eps, decay):
    # in place to avoid allocating table-sized temporaries every step
    m *= b1
    np.multiply(gr, 1.0 - b1, out=tmp)
    m += tmp
    v *= b2
    np.multiply(gr, gr, out=tmp)
    tmp *= 1.0 - b2
    v += tmp
    if decay != 1.0:
        theta *= decay
    np.sqrt(v, out=tmp)
    tmp *= vscale
    tmp += eps
    np.divide(m, tmp, out=tmp)
    tmp *= step_size
    theta -= tmp


if numba is not None:

    @numba.njit(cache=True)
    def _adam_fused(theta, gr, m, v, b1, b2, step_size, vscale, eps, decay):  # pragma: no cover - jitted
        t, g, mm, vv = theta.ravel(), gr.ravel(), m.ravel(), v.ravel()
        for i in range(t.size):
            gi = g[i]
            mi = mm[i] * b1 + gi * (1.0 - b1)
            vi = vv[i] * b2 + (gi * gi) * (1.0 - b2)
            mm[i] = mi
            vv[i] = vi
            ti = t[i] * decay if decay != 1.0 else t[i]
            t[i] = ti - (mi / (np.sqrt(vi) * vscale + eps)) * step_size

else:
    _adam_fused = None


def adam_step(
    params: ParamSet,
    grads: GradSet,
    state: OptimizerState,
    frozen: frozenset[str] | set[str] = frozenset(),
) -> tuple[ParamSet, OptimizerState]:
    """One bias-corrected Adam update, in place.

    ``state.weight_decay`` applies a decoupled shrink ``theta -= lr * wd * theta``
    to the regularised blocks.  The caller renormalises afterwards.
    """
    garrays = grads.arrays()
    for name, gr in garrays.items():
        if name not in frozen and not np.all(np.isfinite(gr)):
            raise DivergenceError(f"divergence detected in gradient block {name}")
    if not state.m:
        state.m = {n: np.zeros_like(a) for n, a in params.arrays().items()}
        state.v = {n: np.zeros_like(a) for n, a in params.arrays().items()}
    state.step += 1
    t = state.step
    step_size = state.lr / (1.0 - state.beta1**t)
    vscale = 1.0 / np.sqrt(1.0 - state.beta2**t)
    for name, theta in params.arrays().items():
        if name in frozen:
            continue
        gr, m, v = garrays[name], state.m[name], state.v[name]
        if m.shape != theta.shape or gr.shape != theta.shape:
            raise ValueError(f"shape mismatch in block {name}")
        decay = 1.0 - state.lr * state.weight_decay if state.weight_decay and name in REGULARIZED else 1.0
        args = (state.beta1, state.beta2, step_size, vscale, state.eps, decay)
        if _adam_fused is not None and theta.flags.c_contiguous and gr.flags.c_contiguous:
            _adam_fused(theta, gr, m, v, *args)
        else:
            tmp = state.scratch.get(name)
            if tmp is None or tmp.shape != theta.shape:
                tmp = state.scratch[name] = np.empty_like(theta)
            _adam_numpy(theta, gr, m, v, tmp, *args)
    return params, state

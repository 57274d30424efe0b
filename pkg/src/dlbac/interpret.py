"""Integrated-gradients attribution plus metadata-flipping experiments.

Attribution uses a right-Riemann approximation of the path integral from an
all-zero baseline (no category active), with gradients streamed one step at
a time.  Per-metadata scores sum absolute per-feature scores over the
metadata's encoder block and are normalized by the maximum block score, so
a block with zero attribution keeps an exact 0.0 (read as "no impact").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import AuthorizationTuple, Dataset
from .encoding import Encoder, encode_matrix, encode_pair
from .engine import MetadataStore
from .errors import ConfigError
from .neuralnet import Network, forward, input_gradient
from .rng import SplitMix64


@dataclass(frozen=True)
class Attribution:
    feature_scores: np.ndarray  # raw per-feature scores, length input_width
    metadata_scores: np.ndarray  # normalized per-metadata scores in [0, 1]
    metadata_names: tuple[str, ...]
    op_index: int
    steps: int
    baseline: str


@dataclass(frozen=True)
class FlipCurve:
    replaced: tuple[str, ...]  # metadata names, in replacement order
    fractions: tuple[float, ...]  # len(replaced) + 1; entry 0 is pre-change


def integrated_gradients(
    net: Network, x: np.ndarray, baseline: np.ndarray, op: int, steps: int
) -> np.ndarray:
    """Per-feature attribution of the op's probability against the baseline."""
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    if x.shape != baseline.shape:
        raise ConfigError("input and baseline widths differ")
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    single = x.ndim == 1
    X = x[None, :] if single else x
    B = baseline[None, :] if single else baseline
    diff = X - B
    total = np.zeros_like(X)
    for k in range(1, steps + 1):
        total += input_gradient(net, B + (k / steps) * diff, op)
    scores = diff * total / steps
    return scores[0] if single else scores


def aggregate(feature_scores: np.ndarray, encoder: Encoder) -> np.ndarray:
    """Per-metadata normalized scores: sum of |features| per block, max -> 1.0."""
    feature_scores = np.asarray(feature_scores, dtype=np.float64)
    if feature_scores.shape[-1] != encoder.width:
        raise ConfigError("feature scores do not match the encoder width")
    single = feature_scores.ndim == 1
    F = feature_scores[None, :] if single else feature_scores
    blocks = np.empty((F.shape[0], encoder.num_positions))
    for p, (start, width) in enumerate(encoder.field_spans):
        blocks[:, p] = np.abs(F[:, start : start + width]).sum(axis=1)
    peak = blocks.max(axis=1, keepdims=True)
    out = np.divide(blocks, peak, out=np.zeros_like(blocks), where=peak > 0)
    return out[0] if single else out


def _attribution_for_pair(
    net: Network, encoder: Encoder, umeta, rmeta, op: int, steps: int
) -> Attribution:
    x = encode_pair(encoder, umeta, rmeta)
    raw = integrated_gradients(net, x, np.zeros_like(x), op, steps)
    return Attribution(
        feature_scores=raw,
        metadata_scores=aggregate(raw, encoder),
        metadata_names=tuple(encoder.names),
        op_index=op,
        steps=steps,
        baseline="zero",
    )


def local_explain(
    net: Network,
    encoder: Encoder,
    store: MetadataStore,
    uid: int,
    rid: int,
    op: int,
    steps: int = 128,
) -> Attribution:
    """Attribution for a single (user, resource) decision."""
    return _attribution_for_pair(
        net, encoder, store.lookup_user(uid), store.lookup_resource(rid), op, steps
    )


def global_explain(
    net: Network,
    encoder: Encoder,
    dataset: Dataset,
    op: int,
    decision_class: int = 1,
    sample_n: int = 50,
    seed: int = 0,
    steps: int = 128,
) -> Attribution:
    """Mean per-tuple normalized attribution over a sample of one label class."""
    pool = [t for t in dataset.tuples if t.ops[op] == decision_class]
    if len(pool) < sample_n:
        raise ConfigError(
            f"need {sample_n} tuples with label {decision_class} for op {op}, "
            f"only {len(pool)} available"
        )
    rng = SplitMix64(seed)
    picks = [pool[i] for i in rng.sample_indices(len(pool), sample_n)]
    U = np.array([t.umeta for t in picks], dtype=np.int64)
    R = np.array([t.rmeta for t in picks], dtype=np.int64)
    X = encode_matrix(encoder, U, R)
    raw = integrated_gradients(net, X, np.zeros_like(X), op, steps)
    normalized = aggregate(raw, encoder)
    return Attribution(
        feature_scores=raw.mean(axis=0),
        metadata_scores=normalized.mean(axis=0),
        metadata_names=tuple(encoder.names),
        op_index=op,
        steps=steps,
        baseline="zero",
    )


def significance_order(attribution: Attribution) -> list[str]:
    """Metadata names sorted by descending score (stable on ties)."""
    order = np.argsort(-attribution.metadata_scores, kind="stable")
    return [attribution.metadata_names[i] for i in order]


def _name_to_column(encoder: Encoder, name: str) -> tuple[str, int]:
    """('u'|'r', column index) for a metadata name like umeta3 / rmeta0."""
    names = encoder.names
    if name not in names:
        raise ConfigError(f"unknown metadata name {name!r}")
    p = names.index(name)
    if p < encoder.num_user_meta:
        return "u", p
    return "r", p - encoder.num_user_meta


def flip_study(
    net: Network,
    encoder: Encoder,
    dataset: Dataset,
    op: int,
    donor: AuthorizationTuple,
    order: list[str],
    threshold: float = 0.5,
) -> FlipCurve:
    """Cumulative donor-value replacement over all network-denied tuples.

    After each replacement (in the given order, typically the global
    significance order) the fraction of formerly denied tuples now granted
    is recorded; entry 0 is the unmodified fraction, which is 0 because the
    deny set is defined by the network's own decisions.
    """
    donor_x = encode_pair(encoder, donor.umeta, donor.rmeta)
    if not float(forward(net, donor_x)[op]) > threshold:
        raise ConfigError("donor tuple is denied for the requested operation")

    U = dataset.umeta_matrix()
    R = dataset.rmeta_matrix()
    probs = forward(net, encode_matrix(encoder, U, R))[:, op]
    denied = probs <= threshold
    U = U[denied].copy()
    R = R[denied].copy()
    if U.shape[0] == 0:
        raise ConfigError("no denied tuples to flip")

    fractions = [0.0]
    for name in order:
        side, col = _name_to_column(encoder, name)
        if side == "u":
            U[:, col] = donor.umeta[col]
        else:
            R[:, col] = donor.rmeta[col]
        probs = forward(net, encode_matrix(encoder, U, R))[:, op]
        fractions.append(float(np.mean(probs > threshold)))
    return FlipCurve(replaced=tuple(order), fractions=tuple(fractions))


def insignificance_check(
    net: Network,
    encoder: Encoder,
    tup: AuthorizationTuple,
    donor: AuthorizationTuple,
    op: int,
    score_threshold: float = 0.05,
    steps: int = 128,
    threshold: float = 0.5,
) -> bool:
    """True when replacing all low-attribution metadata leaves the decision unchanged.

    Metadata whose local normalized score is strictly below `score_threshold`
    (exact zeros included) take the donor's values.
    """
    attr = _attribution_for_pair(net, encoder, tup.umeta, tup.rmeta, op, steps)
    before = float(forward(net, encode_pair(encoder, tup.umeta, tup.rmeta))[op]) > threshold
    umeta = list(tup.umeta)
    rmeta = list(tup.rmeta)
    for name, s in zip(attr.metadata_names, attr.metadata_scores):
        if s < score_threshold:
            side, col = _name_to_column(encoder, name)
            if side == "u":
                umeta[col] = donor.umeta[col]
            else:
                rmeta[col] = donor.rmeta[col]
    after = float(forward(net, encode_pair(encoder, umeta, rmeta))[op]) > threshold
    return before == after


def attribution_to_csv(attribution: Attribution) -> str:
    lines = ["metadata_name,normalized_score"]
    for name, s in zip(attribution.metadata_names, attribution.metadata_scores):
        lines.append(f"{name},{s:.6f}")
    return "\n".join(lines) + "\n"


def flip_curve_to_csv(curve: FlipCurve) -> str:
    lines = ["step,metadata_replaced,fraction_granted"]
    lines.append(f"0,,{curve.fractions[0]:.6f}")
    for i, name in enumerate(curve.replaced, start=1):
        lines.append(f"{i},{name},{curve.fractions[i]:.6f}")
    return "\n".join(lines) + "\n"

"""Message features, the MLP deception classifier, and signal-based baselines."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.feature_extraction.text import HashingVectorizer

from .deception import DeceptionSignature
from .extract import Message, Proposal
from .orders import Action, render_order

SCHEMA_VERSION = 1
NUMERIC_FEATURES = ("U1", "U2", "U3", "presence")
NO_SIGNATURE = "no_signature"


class DimensionError(ValueError):
    pass


class DegenerateDatasetError(ValueError):
    pass


class UnitSetMismatchError(ValueError):
    pass


# -- text encoders ---------------------------------------------------------------------


class HashingEncoder:
    """Signed feature hashing of word unigrams and bigrams, L2-normalized."""

    kind = "hashing"

    def __init__(self, dim: int = 128):
        if dim < 1:
            raise ValueError("encoder dimension must be >= 1")
        self.dim = dim
        self._vec = HashingVectorizer(
            n_features=dim, ngram_range=(1, 2), alternate_sign=True, norm="l2", lowercase=True
        )

    def encode(self, text: str) -> np.ndarray:
        return self._vec.transform([text]).toarray()[0]

    def encode_message(self, msg: Message) -> np.ndarray:
        return self.encode(msg.text)

    def describe(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


class EmbeddingEncoder:
    """Precomputed vectors keyed by message id, one ``{msg_id, vector}`` record per line."""

    kind = "embedding"

    def __init__(self, vectors: Mapping[str, Sequence[float]], dim: int | None = None):
        self.vectors = {k: np.asarray(v, dtype=float) for k, v in vectors.items()}
        dims = {len(v) for v in self.vectors.values()}
        if dim is None:
            if len(dims) != 1:
                raise DimensionError(f"embedding vectors have inconsistent sizes {sorted(dims)}")
            dim = dims.pop()
        elif dims - {dim}:
            raise DimensionError(f"embedding vectors must have size {dim}")
        self.dim = dim

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingEncoder":
        vectors = {}
        with open(path) as fh:
            for n, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                try:
                    vectors[rec["msg_id"]] = rec["vector"]
                except KeyError as exc:
                    raise ValueError(f"{path}:{n}: missing field {exc}") from None
        return cls(vectors)

    def encode(self, text: str) -> np.ndarray:
        raise TypeError("embedding encoder needs a message id; use encode_message")

    def encode_message(self, msg: Message) -> np.ndarray:
        try:
            return self.vectors[msg.msg_id]
        except KeyError:
            raise KeyError(f"no embedding for message {msg.msg_id}") from None

    def describe(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


@dataclass(frozen=True)
class FeatureVector:
    text: np.ndarray
    numeric: tuple[float, float, float]
    presence: int

    @property
    def array(self) -> np.ndarray:
        return np.concatenate([self.text, np.asarray(self.numeric, dtype=float), [float(self.presence)]])


def featurize(msg: Message, signature: DeceptionSignature | None, encoder) -> FeatureVector:
    text = np.asarray(encoder.encode_message(msg), dtype=float)
    if signature is None:
        return FeatureVector(text, (0.0, 0.0, 0.0), 0)
    return FeatureVector(text, signature.values, 1)


# -- MLP -------------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    step: float = 1e-3
    hidden: tuple[int, ...] = (64, 16)
    optimizer: str = "adam"
    class_weight: bool = True
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be sgd or adam")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.step <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and step > 0 required")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class MlpModel:
    """ReLU hidden layers, logistic output. ``weights[k]`` has shape (fan_out, fan_in)."""

    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    threshold: float = 0.5
    seed: int = 0
    encoder: dict = field(default_factory=dict)
    final_loss: float | None = None
    losses: list[float] = field(default_factory=list)

    @classmethod
    def init(cls, sizes: Sequence[int], seed: int = 0, threshold: float = 0.5) -> "MlpModel":
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(tuple(sizes), weights, biases, threshold, seed)

    @classmethod
    def zeros(cls, sizes: Sequence[int]) -> "MlpModel":
        pairs = list(zip(sizes[:-1], sizes[1:]))
        return cls(tuple(sizes), [np.zeros((o, i)) for i, o in pairs], [np.zeros(o) for _, o in pairs])

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise DimensionError(f"model expects {self.input_dim} features, got {X.shape[1]}")
        return X

    def logits(self, X: np.ndarray) -> np.ndarray:
        h = self._check(X)
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W.T + b
            if k < last:
                h = np.maximum(h, 0.0)
        return h[:, 0]

    def scores(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.logits(X))

    def loss_and_grads(
        self, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray | None = None
    ) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """Weighted mean binary cross-entropy and its gradients."""
        X = self._check(X)
        y = np.asarray(y, dtype=float)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        acts = [X]
        pre = []
        h = X
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W.T + b
            pre.append(z)
            h = np.maximum(z, 0.0) if k < last else z
            acts.append(h)
        z = pre[-1][:, 0]
        # softplus(z) - y*z, written to avoid overflow
        per = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z))) - y * z
        n = len(y)
        loss = float(np.sum(w * per) / n)
        delta = ((w * (_sigmoid(z) - y)) / n)[:, None]
        gW: list[np.ndarray] = [np.empty(0)] * len(self.weights)
        gb: list[np.ndarray] = [np.empty(0)] * len(self.weights)
        for k in range(last, -1, -1):
            gW[k] = delta.T @ acts[k]
            gb[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.weights[k]) * (pre[k - 1] > 0)
        return loss, gW, gb

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "features": {"text_dim": self.sizes[0] - len(NUMERIC_FEATURES), "numeric": list(NUMERIC_FEATURES)},
            "encoder": self.encoder,
            "sizes": list(self.sizes),
            "threshold": self.threshold,
            "seed": self.seed,
            "final_loss": self.final_loss,
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    def dumps(self) -> str:
        """JSON text with every real written to 17 significant digits."""

        def num(x) -> str:
            return "null" if x is None else format(float(x), ".17g")

        def arr(xs) -> str:
            return "[" + ", ".join(num(x) for x in xs) + "]"

        doc = self.to_doc()
        head = {k: v for k, v in doc.items() if k not in ("weights", "biases", "threshold", "final_loss")}
        lines = ["{"]
        for k, v in head.items():
            lines.append(f"  {json.dumps(k)}: {json.dumps(v, sort_keys=True)},")
        lines.append(f'  "threshold": {num(self.threshold)},')
        lines.append(f'  "final_loss": {num(self.final_loss)},')
        lines.append('  "weights": [' + ", ".join(arr(w) for w in doc["weights"]) + "],")
        lines.append('  "biases": [' + ", ".join(arr(b) for b in doc["biases"]) + "]")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_doc(cls, doc: Mapping) -> "MlpModel":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema version {doc.get('schema_version')!r}")
        sizes = tuple(doc["sizes"])
        weights = [
            np.asarray(w, dtype=float).reshape(o, i) for w, i, o in zip(doc["weights"], sizes[:-1], sizes[1:])
        ]
        biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
        for W in weights + biases:
            if not np.all(np.isfinite(W)):
                raise ValueError("model file contains non-finite weights")
        return cls(
            sizes, weights, biases, float(doc["threshold"]), int(doc["seed"]), dict(doc.get("encoder") or {}),
            doc.get("final_loss"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "MlpModel":
        return cls.from_doc(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Prediction:
    score: float
    label: bool


def predict(model: MlpModel, vector) -> Prediction:
    x = vector.array if isinstance(vector, FeatureVector) else np.asarray(vector, dtype=float)
    if x.ndim != 1:
        raise DimensionError("predict takes a single feature vector")
    score = float(model.scores(x[None, :])[0])
    return Prediction(score, score >= model.threshold)


def _class_weights(y: np.ndarray) -> np.ndarray:
    n = len(y)
    pos = int(y.sum())
    neg = n - pos
    return np.where(y > 0.5, n / (2.0 * pos), n / (2.0 * neg))


def train(
    dataset: Iterable[tuple[FeatureVector | np.ndarray, int | bool]],
    config: TrainConfig = TrainConfig(),
    encoder: dict | None = None,
) -> MlpModel:
    """Mini-batch training on class-weighted cross-entropy; bit-reproducible for a given seed."""
    rows = list(dataset)
    if not rows:
        raise DegenerateDatasetError("empty training set")
    X = np.stack([v.array if isinstance(v, FeatureVector) else np.asarray(v, dtype=float) for v, _ in rows])
    y = np.asarray([1.0 if lab else 0.0 for _, lab in rows])
    pos = int(y.sum())
    if pos == 0 or pos == len(y):
        raise DegenerateDatasetError(f"training labels are all {'positive' if pos else 'negative'}")
    if not np.all(np.isfinite(X)):
        raise ValueError("training features contain non-finite values")
    sw = _class_weights(y) if config.class_weight else np.ones(len(y))

    model = MlpModel.init((X.shape[1], *config.hidden, 1), config.seed, config.threshold)
    model.encoder = dict(encoder or {})
    params = model.weights + model.biases
    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    t = 0
    rng = np.random.default_rng(config.seed + 1)
    for _ in range(config.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), config.batch_size):
            idx = order[start : start + config.batch_size]
            _, gW, gb = model.loss_and_grads(X[idx], y[idx], sw[idx])
            t += 1
            for k, g in enumerate(gW + gb):
                p = params[k]
                if config.optimizer == "sgd":
                    p -= config.step * g
                else:
                    adam_m[k] = b1 * adam_m[k] + (1 - b1) * g
                    adam_v[k] = b2 * adam_v[k] + (1 - b2) * g * g
                    mhat = adam_m[k] / (1 - b1**t)
                    vhat = adam_v[k] / (1 - b2**t)
                    p -= config.step * mhat / (np.sqrt(vhat) + eps)
        model.losses.append(model.loss_and_grads(X, y, sw)[0])
    model.final_loss = model.losses[-1] if model.losses else model.loss_and_grads(X, y, sw)[0]
    return model


# -- baselines -------------------------------------------------------------------------


@dataclass(frozen=True)
class BaselineConfig:
    t1: float = 0.0
    t2: float = 0.0
    t3: float = 0.0
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        for name in ("t1", "t2", "t3", "w1", "w2", "w3", "t"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"baseline parameter {name} must be finite")


@dataclass(frozen=True)
class BaselineResult:
    label: bool
    flags: tuple[str, ...] = ()


def rule_baseline(signature: DeceptionSignature | None, cfg: BaselineConfig = BaselineConfig()) -> BaselineResult:
    if signature is None:
        return BaselineResult(False, (NO_SIGNATURE,))
    u1, u2, u3 = signature.values
    return BaselineResult(u1 > cfg.t1 and u2 > cfg.t2 and u3 > cfg.t3)


def linear_baseline(signature: DeceptionSignature | None, cfg: BaselineConfig = BaselineConfig()) -> BaselineResult:
    if signature is None:
        return BaselineResult(False, (NO_SIGNATURE,))
    u1, u2, u3 = signature.values
    return BaselineResult(u1 * cfg.w1 + u2 * cfg.w2 + u3 * cfg.w3 > cfg.t)


@dataclass(frozen=True)
class AlignmentResult:
    label: bool
    misaligned_count: int
    aligned_count: int
    misaligned: tuple[tuple[str, str], ...]  # (promised, predicted) pairs


def alignment_baseline(proposal: Proposal, predicted: Action) -> AlignmentResult:
    """Compare promised against predicted orders unit by unit; alert when misaligned >= aligned."""
    promised = proposal.proposer_action
    if predicted.power != promised.power:
        raise UnitSetMismatchError(f"predicted action is for {predicted.power}, proposal is from {promised.power}")
    mine = {o.unit: o for o in promised.orders}
    theirs = {o.unit: o for o in predicted.orders}
    if set(mine) != set(theirs):
        raise UnitSetMismatchError(
            f"unit sets differ: promised {sorted(map(str, mine))}, predicted {sorted(map(str, theirs))}"
        )
    bad = []
    for unit in sorted(mine):
        a, b = render_order(mine[unit]), render_order(theirs[unit])
        if a != b:
            bad.append((a, b))
    aligned = len(mine) - len(bad)
    return AlignmentResult(len(bad) >= aligned, len(bad), aligned, tuple(bad))

"""Black-box prediction interface, built-in classifiers and the wire client.

Every model is consumed through :class:`Predictor`: a pure mapping from a
sample to a probability vector. The search code never sees weights or
gradients, so anything that answers probability queries (including a
subprocess or TCP adapter) can be tested.
"""

from __future__ import annotations

import json
import logging
import shlex
import socket
import subprocess
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Categorical, FeatureSchema, Numeric, Sample
from .data import Dataset, encode_many, render_value, tokenize
from .errors import AdapterDown, ConfigError, Diverged, ProtocolViolation

log = logging.getLogger(__name__)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Predictor:
    """Interface every tested model satisfies.

    Subclasses implement ``_proba_batch``; the base class keeps the query
    counter and the single-sample convenience wrapper. predict_proba must be
    pure: identical inputs give bit-identical probability vectors.
    """

    labels: tuple[str, ...]

    def __init__(self, labels: Sequence[str]):
        self.labels = tuple(labels)
        self._query_count = 0

    @property
    def query_count(self) -> int:
        return self._query_count

    def _proba_batch(self, samples: Sequence[Sample]) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, sample: Sample) -> np.ndarray:
        return self.predict_proba_many([sample])[0]

    def predict_proba_many(self, samples: Sequence[Sample]) -> np.ndarray:
        if not samples:
            return np.zeros((0, len(self.labels)))
        self._query_count += len(samples)
        probs = self._proba_batch(samples)
        if probs.shape != (len(samples), len(self.labels)):
            raise ValueError("predictor returned a misshapen probability matrix")
        return probs

    def predict_index_many(self, samples: Sequence[Sample]) -> np.ndarray:
        return np.argmax(self.predict_proba_many(samples), axis=1)

    def close(self) -> None:
        pass


@dataclass
class TrainConfig:
    kind: str = "logistic"  # logistic | mlp | bow
    epochs: int = 100
    learning_rate: float = 0.1
    rng_seed: int = 0
    layers: int = 2
    neurons: int = 32
    vocab_size: int = 2000
    l2: float = 1e-4
    batch_size: int = 32

    def __post_init__(self):
        if self.kind not in ("logistic", "mlp", "bow"):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.epochs <= 0:
            raise ConfigError("epochs must be > 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")


class LogisticModel(Predictor):
    """Multinomial logistic regression on the schema encoding."""

    kind = "logistic"

    def __init__(self, labels, schema: FeatureSchema, weights: np.ndarray, bias: np.ndarray):
        super().__init__(labels)
        self.schema = schema
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.train_accuracy: Optional[float] = None

    def _proba_batch(self, samples):
        x = encode_many(samples, self.schema)
        return softmax(x @ self.weights + self.bias)


class MlpModel(Predictor):
    """Fully-connected ReLU network with a softmax head."""

    kind = "mlp"

    def __init__(self, labels, schema: FeatureSchema, layers: list[tuple[np.ndarray, np.ndarray]]):
        super().__init__(labels)
        self.schema = schema
        self.layers = [(np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64)) for w, b in layers]
        self.train_accuracy: Optional[float] = None

    def _forward(self, x: np.ndarray) -> np.ndarray:
        h = x
        for w, b in self.layers[:-1]:
            h = np.maximum(h @ w + b, 0.0)
        w, b = self.layers[-1]
        return h @ w + b

    def _proba_batch(self, samples):
        return softmax(self._forward(encode_many(samples, self.schema)))


class TextBowModel(Predictor):
    """Bag-of-words logistic classifier over a frequency-ranked vocabulary."""

    kind = "bow"

    def __init__(self, labels, vocab: Sequence[str], weights: np.ndarray, bias: np.ndarray):
        super().__init__(labels)
        self.vocab = tuple(vocab)
        self._index = {w: i for i, w in enumerate(self.vocab)}
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.train_accuracy: Optional[float] = None

    def featurize(self, sample: Sample) -> np.ndarray:
        x = np.zeros(len(self.vocab), dtype=np.float64)
        for token in sample.values:
            idx = self._index.get(token)
            if idx is not None:
                x[idx] += 1.0
        return x

    def _proba_batch(self, samples):
        x = np.stack([self.featurize(s) for s in samples])
        return softmax(x @ self.weights + self.bias)


class PlantedModel(Predictor):
    """Synthetic tabular classifier with a known discriminatory sub-region.

    Outside the region the decision depends only on the additive features;
    inside it the protected feature flips the decision, so the set of
    discriminatory inputs is enumerable by construction. Used as a ground
    truth for oracle-based evaluation.
    """

    kind = "planted"

    def __init__(
        self,
        labels,
        schema: FeatureSchema,
        base_features: Sequence[str],
        base_scale: float,
        base_offset: float,
        region: dict[str, Sequence[int]],
        protected_feature: str,
        flip_values: Sequence[int],
        gain: float,
    ):
        super().__init__(labels)
        self.schema = schema
        self.base_features = tuple(base_features)
        self.base_scale = float(base_scale)
        self.base_offset = float(base_offset)
        self.region = {k: tuple(v) for k, v in region.items()}
        self.protected_feature = protected_feature
        self.flip_values = tuple(flip_values)
        self.gain = float(gain)
        self._base_idx = [schema.feature_index(n) for n in self.base_features]
        self._region_idx = {schema.feature_index(n): set(v) for n, v in self.region.items()}
        self._prot_idx = schema.feature_index(protected_feature)
        self._flip = set(self.flip_values)

    def _proba_batch(self, samples):
        vals = np.array([[s.values[i] for i in self._base_idx] for s in samples], dtype=np.float64)
        z = self.base_scale * (vals.sum(axis=1) + self.base_offset)
        for s_i, s in enumerate(samples):
            in_region = all(s.values[i] in allowed for i, allowed in self._region_idx.items())
            if in_region:
                z[s_i] += self.gain if s.values[self._prot_idx] in self._flip else -self.gain
        p1 = 1.0 / (1.0 + np.exp(-z))
        return np.stack([1.0 - p1, p1], axis=1)


# ---------------------------------------------------------------------------
# Training

def _sgd_softmax_linear(x: np.ndarray, y: np.ndarray, n_classes: int, cfg: TrainConfig):
    rng = np.random.default_rng(cfg.rng_seed)
    n, d = x.shape
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[y]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            probs = softmax(x[idx] @ w + b)
            grad = probs - onehot[idx]
            w -= cfg.learning_rate * (x[idx].T @ grad / len(idx) + cfg.l2 * w)
            b -= cfg.learning_rate * grad.mean(axis=0)
        loss = -np.log(softmax(x @ w + b)[np.arange(n), y] + 1e-12).mean()
        if not np.isfinite(loss):
            raise Diverged(epoch)
    return w, b


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _sgd_mlp(x: np.ndarray, y: np.ndarray, n_classes: int, cfg: TrainConfig):
    rng = np.random.default_rng(cfg.rng_seed)
    sizes = [x.shape[1]] + [cfg.neurons] * cfg.layers + [n_classes]
    weights = [_glorot(rng, sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]
    biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
    onehot = np.eye(n_classes)[y]
    n = len(x)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            activations = [x[idx]]
            for w, b in zip(weights[:-1], biases[:-1]):
                activations.append(np.maximum(activations[-1] @ w + b, 0.0))
            logits = activations[-1] @ weights[-1] + biases[-1]
            delta = softmax(logits) - onehot[idx]
            if not np.isfinite(delta).all():
                raise Diverged(epoch)
            for li in range(len(weights) - 1, -1, -1):
                grad_w = activations[li].T @ delta / len(idx) + cfg.l2 * weights[li]
                grad_b = delta.mean(axis=0)
                if li > 0:
                    delta = (delta @ weights[li].T) * (activations[li] > 0)
                weights[li] -= cfg.learning_rate * grad_w
                biases[li] -= cfg.learning_rate * grad_b
    return list(zip(weights, biases))


def _bow_matrix(dataset: Dataset, vocab_size: int):
    counts: dict[str, int] = {}
    for sample in dataset.samples:
        for token in sample.values:
            counts[token] = counts.get(token, 0) + 1
    vocab = [w for w, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:vocab_size]]
    index = {w: i for i, w in enumerate(vocab)}
    x = np.zeros((len(dataset), len(vocab)))
    for row, sample in enumerate(dataset.samples):
        for token in sample.values:
            col = index.get(token)
            if col is not None:
                x[row, col] += 1.0
    return vocab, x


def train(dataset: Dataset, config: TrainConfig) -> Predictor:
    """Train a built-in classifier; deterministic for a fixed rng_seed."""
    if dataset.labels is None:
        raise ConfigError("training requires a labeled dataset")
    schema = dataset.schema
    y = np.asarray(dataset.labels)
    n_classes = len(schema.label_names)
    if config.kind == "bow":
        if not schema.is_text:
            raise ConfigError("bow models require a text schema")
        vocab, x = _bow_matrix(dataset, config.vocab_size)
        w, b = _sgd_softmax_linear(x, y, n_classes, config)
        model: Predictor = TextBowModel(schema.label_names, vocab, w, b)
    else:
        x = encode_many(dataset.samples, schema)
        if config.kind == "logistic":
            w, b = _sgd_softmax_linear(x, y, n_classes, config)
            model = LogisticModel(schema.label_names, schema, w, b)
        else:
            layers = _sgd_mlp(x, y, n_classes, config)
            model = MlpModel(schema.label_names, schema, layers)
    preds = model.predict_proba_many(dataset.samples).argmax(axis=1)
    model.train_accuracy = float((preds == y).mean())
    model._query_count = 0  # training-time queries are not part of the tested run
    log.info("trained %s model, training accuracy %.4f", config.kind, model.train_accuracy)
    return model


# ---------------------------------------------------------------------------
# Model files

def save_model(model: Predictor, path) -> None:
    if isinstance(model, LogisticModel):
        payload = {
            "kind": "logistic",
            "labels": list(model.labels),
            "weights": model.weights.tolist(),
            "bias": model.bias.tolist(),
        }
    elif isinstance(model, MlpModel):
        payload = {
            "kind": "mlp",
            "labels": list(model.labels),
            "layers": [{"weights": w.tolist(), "bias": b.tolist()} for w, b in model.layers],
        }
    elif isinstance(model, TextBowModel):
        payload = {
            "kind": "bow",
            "labels": list(model.labels),
            "vocab": list(model.vocab),
            "weights": model.weights.tolist(),
            "bias": model.bias.tolist(),
        }
    elif isinstance(model, PlantedModel):
        payload = {
            "kind": "planted",
            "labels": list(model.labels),
            "base_features": list(model.base_features),
            "base_scale": model.base_scale,
            "base_offset": model.base_offset,
            "region": {k: list(v) for k, v in model.region.items()},
            "protected_feature": model.protected_feature,
            "flip_values": list(model.flip_values),
            "gain": model.gain,
        }
    else:
        raise ConfigError(f"cannot serialize predictor of type {type(model).__name__}")
    accuracy = getattr(model, "train_accuracy", None)
    if accuracy is not None:
        payload["train_accuracy"] = accuracy
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path, schema: FeatureSchema) -> Predictor:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    kind = payload.get("kind")
    if kind == "logistic":
        model: Predictor = LogisticModel(
            payload["labels"], schema, np.array(payload["weights"]), np.array(payload["bias"])
        )
    elif kind == "mlp":
        layers = [(np.array(l["weights"]), np.array(l["bias"])) for l in payload["layers"]]
        model = MlpModel(payload["labels"], schema, layers)
    elif kind == "bow":
        model = TextBowModel(
            payload["labels"], payload["vocab"], np.array(payload["weights"]), np.array(payload["bias"])
        )
    elif kind == "planted":
        model = PlantedModel(
            payload["labels"],
            schema,
            base_features=payload["base_features"],
            base_scale=payload["base_scale"],
            base_offset=payload["base_offset"],
            region=payload["region"],
            protected_feature=payload["protected_feature"],
            flip_values=payload["flip_values"],
            gain=payload["gain"],
        )
    else:
        raise ConfigError(f"unknown model kind {kind!r} in {path}")
    if "train_accuracy" in payload:
        model.train_accuracy = payload["train_accuracy"]
    return model


# ---------------------------------------------------------------------------
# External adapter client

def render_wire_values(sample: Sample, schema: FeatureSchema) -> list:
    """Feature values as the wire protocol carries them."""
    if schema.is_text:
        return list(sample.values)
    out = []
    for v, spec in zip(sample.values, schema.features):
        if isinstance(spec.kind, Categorical):
            out.append(spec.kind.domain[v])
        else:
            out.append(v)
    return out


class _StdioTransport:
    def __init__(self, command: str):
        try:
            self.proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise AdapterDown(f"cannot start adapter {command!r}: {exc}")

    def send_line(self, line: str) -> None:
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise AdapterDown(f"adapter stdin closed: {exc}")

    def recv_line(self) -> str:
        line = self.proc.stdout.readline()
        if line == "":
            raise AdapterDown("adapter closed its stdout")
        return line.rstrip("\n")

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.wait(timeout=10)


class _TcpTransport:
    def __init__(self, address: str):
        host, _, port = address.rpartition(":")
        try:
            self.sock = socket.create_connection((host, int(port)), timeout=30)
        except OSError as exc:
            raise AdapterDown(f"cannot connect to {address}: {exc}")
        self.reader = self.sock.makefile("r", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self.sock.sendall((line + "\n").encode("utf-8"))
        except OSError as exc:
            raise AdapterDown(f"adapter socket closed: {exc}")

    def recv_line(self) -> str:
        line = self.reader.readline()
        if line == "":
            raise AdapterDown("adapter closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        self.reader.close()
        self.sock.close()


def _looks_like_address(target: str) -> bool:
    host, sep, port = target.rpartition(":")
    return bool(sep) and port.isdigit() and " " not in target


class ExternalPredictor(Predictor):
    """Client for the newline-delimited JSON prediction protocol.

    One JSON object per line, ids echoed verbatim:
      {"op":"hello"} -> {"op":"hello","labels":[...]}
      {"op":"predict","id":N,"x":[...]} -> {"op":"probs","id":N,"p":[...]}
      errors arrive as {"op":"error","id":N,"msg":"..."}
    """

    kind = "external"

    def __init__(self, target: str, schema: FeatureSchema):
        self.schema = schema
        self._transport = _TcpTransport(target) if _looks_like_address(target) else _StdioTransport(target)
        self._next_id = 0
        labels = self._handshake()
        super().__init__(labels)

    def _roundtrip(self, request: dict) -> dict:
        self._transport.send_line(json.dumps(request, separators=(",", ":")))
        line = self._transport.recv_line()
        try:
            response = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolViolation(f"response is not valid JSON: {line!r}")
        if not isinstance(response, dict) or "op" not in response:
            raise ProtocolViolation(f"response missing op field: {line!r}")
        return response

    def _handshake(self) -> list[str]:
        response = self._roundtrip({"op": "hello"})
        if response.get("op") != "hello" or not isinstance(response.get("labels"), list):
            raise ProtocolViolation(f"bad handshake response: {response!r}")
        return [str(l) for l in response["labels"]]

    def _predict_one(self, sample: Sample) -> np.ndarray:
        request_id = self._next_id
        self._next_id += 1
        response = self._roundtrip(
            {"op": "predict", "id": request_id, "x": render_wire_values(sample, self.schema)}
        )
        if response.get("op") == "error":
            raise ProtocolViolation(f"adapter error: {response.get('msg')}")
        if response.get("op") != "probs":
            raise ProtocolViolation(f"unexpected op {response.get('op')!r}")
        if response.get("id") != request_id:
            raise ProtocolViolation(
                f"id mismatch: sent {request_id}, received {response.get('id')!r}"
            )
        p = response.get("p")
        if not isinstance(p, list) or len(p) != len(self.labels):
            raise ProtocolViolation(f"bad probability vector: {p!r}")
        vec = np.asarray(p, dtype=np.float64)
        if not np.isfinite(vec).all() or abs(vec.sum() - 1.0) > 1e-6 or (vec < 0).any():
            raise ProtocolViolation(f"probabilities invalid: {p!r}")
        return vec

    def _proba_batch(self, samples):
        return np.stack([self._predict_one(s) for s in samples])

    def close(self) -> None:
        self._transport.close()


class PooledExternalPredictor(Predictor):
    """Round-robins batch queries over several adapter connections.

    Each worker owns one connection; results are reassembled in request
    order, so pooling never changes what a pure adapter returns.
    """

    kind = "external"

    def __init__(self, target: str, schema: FeatureSchema, workers: int):
        self._clients = [ExternalPredictor(target, schema) for _ in range(workers)]
        super().__init__(self._clients[0].labels)
        self.schema = schema

    def _proba_batch(self, samples):
        import concurrent.futures

        chunks = np.array_split(np.arange(len(samples)), len(self._clients))
        results: list[Optional[np.ndarray]] = [None] * len(self._clients)
        with concurrent.futures.ThreadPoolExecutor(max_workers=len(self._clients)) as pool:
            futures = {
                pool.submit(
                    client._proba_batch, [samples[i] for i in chunk]
                ): slot
                for slot, (client, chunk) in enumerate(zip(self._clients, chunks))
                if len(chunk)
            }
            for future in concurrent.futures.as_completed(futures):
                results[futures[future]] = future.result()
        return np.concatenate([r for r in results if r is not None])

    def close(self) -> None:
        for client in self._clients:
            client.close()


def external_predictor(target: str, schema: FeatureSchema, workers: int = 1) -> Predictor:
    """Connect to an adapter by command line (stdio) or host:port (TCP)."""
    if workers <= 1:
        return ExternalPredictor(target, schema)
    return PooledExternalPredictor(target, schema, workers)

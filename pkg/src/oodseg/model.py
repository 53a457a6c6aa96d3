"""A tiny per-pixel classifier trained with the two-term uncertainty objective.

The model maps each pixel's feature vector through a small tanh network
to class probabilities. Training minimizes a convex combination of the
usual cross entropy on labeled in-distribution pixels and, weighted by
``ood_weight``, the negative log-likelihood averaged over all classes on
proxy out-of-distribution pixels. The second term is minimized exactly
when the softmax output is uniform, i.e. it pushes the entropy of proxy
pixels to its maximum, which is what makes entropy thresholding work as
an OoD detector afterwards.

Everything runs in float64 with analytic backpropagation; training is
plain mini-batch SGD, deterministic for a given seed.
"""

import base64
import json
import math
from dataclasses import dataclass

import numpy as np

from .formats import FeatureMap, SoftmaxMap

LOG_FLOOR = 1e-12


class NumericalError(RuntimeError):
    """Training or scoring produced non-finite numbers."""


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``ood_weight`` is the weight of the proxy-pixel term in the overall
    objective; ``mix_ratio`` the number of proxy pixels drawn per
    in-distribution pixel each epoch (0.1 = a 1:10 mix). The default
    optimizer is Adam; ``optimizer="sgd"`` selects plain gradient steps.
    """

    ood_weight: float = 0.9
    mix_ratio: float = 0.1
    crop_size: int = 0          # 0 trains on full scenes
    epochs: int = 120
    learning_rate: float = 5e-3
    batch_size: int = 256
    hidden: tuple = (24, 24)
    dropout: float = 0.1
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ood_weight <= 1.0:
            raise ValueError(f"ood_weight must lie in [0, 1], got {self.ood_weight}")
        if self.mix_ratio < 0.0:
            raise ValueError("mix_ratio must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class _AdamState:
    """Per-parameter Adam moments with bias correction."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def update(self, params, grads, lr):
        self.t += 1
        correct1 = 1.0 - self.beta1 ** self.t
        correct2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class ToyModel:
    """Per-pixel MLP: d input features -> hidden tanh layers -> q classes."""

    def __init__(self, weights, biases, dropout=0.0):
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        self.dropout = float(dropout)

    @classmethod
    def initialize(cls, n_features, hidden, n_classes, seed=0, dropout=0.0):
        rng = np.random.default_rng([int(seed), 101])
        sizes = [n_features, *hidden, n_classes]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.normal(0.0, 1.0 / math.sqrt(fan_in), (fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, dropout)

    @property
    def n_features(self):
        return self.weights[0].shape[0]

    @property
    def n_classes(self):
        return self.weights[-1].shape[1]

    def _forward(self, X, dropout_rng=None):
        """Returns (probs, caches); caches feed :meth:`_backward`."""
        a = np.asarray(X, dtype=np.float64)
        caches = []
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            z_in = a
            h = np.tanh(z_in @ W + b)
            mask = None
            if dropout_rng is not None and self.dropout > 0.0:
                mask = dropout_rng.random(h.shape) >= self.dropout
                a = h * mask / (1.0 - self.dropout)
            else:
                a = h
            caches.append((z_in, h, mask))
        logits = a @ self.weights[-1] + self.biases[-1]
        caches.append((a, None, None))
        return _softmax(logits), caches

    def _backward(self, caches, dlogits, want_input_grad=False):
        """Parameter gradients given d(loss)/d(logits)."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        a_last = caches[-1][0]
        grads_w[-1] = a_last.T @ dlogits
        grads_b[-1] = dlogits.sum(axis=0)
        da = dlogits @ self.weights[-1].T
        for layer in range(len(self.weights) - 2, -1, -1):
            z_in, h, mask = caches[layer]
            if mask is not None:
                da = da * mask / (1.0 - self.dropout)
            dz = da * (1.0 - h * h)
            grads_w[layer] = z_in.T @ dz
            grads_b[layer] = dz.sum(axis=0)
            da = dz @ self.weights[layer].T
        if want_input_grad:
            return grads_w, grads_b, da
        return grads_w, grads_b

    def predict_proba(self, X, dropout_rng=None):
        probs, _ = self._forward(X, dropout_rng)
        return probs

    def penultimate(self, X):
        """Activations of the last hidden layer (pre-dropout)."""
        a = np.asarray(X, dtype=np.float64)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.tanh(a @ W + b)
        return a

    def input_gradient_log_map(self, X):
        """d log p_c / dx at each row, c being the row's MAP class."""
        probs, caches = self._forward(X)
        top = probs.argmax(axis=1)
        dlogits = -probs
        dlogits[np.arange(len(top)), top] += 1.0
        _, _, dx = self._backward(caches, dlogits, want_input_grad=True)
        return dx

    # -- parameter packing (used by SGD updates and the gradient check)

    def flat_params(self):
        return np.concatenate([p.ravel() for p in self.weights + self.biases])

    def set_flat_params(self, theta):
        offset = 0
        for p in self.weights + self.biases:
            p[...] = theta[offset : offset + p.size].reshape(p.shape)
            offset += p.size

    def to_json(self):
        def blob(arr):
            return {
                "shape": list(arr.shape),
                "data": base64.b64encode(np.ascontiguousarray(arr, "<f8").tobytes()).decode(),
            }

        doc = {
            "kind": "toy-pixel-classifier",
            "dropout": self.dropout,
            "weights": [blob(w) for w in self.weights],
            "biases": [blob(b) for b in self.biases],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)

        def unblob(entry):
            raw = base64.b64decode(entry["data"])
            return np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).copy()

        return cls(
            [unblob(w) for w in doc["weights"]],
            [unblob(b) for b in doc["biases"]],
            doc["dropout"],
        )


# ---------------------------------------------------------------------------
# losses

def loss_in(p, y):
    """Cross entropy: negative log-likelihood of the target class."""
    p = np.asarray(p, dtype=np.float64)
    return float(-np.log(max(p[int(y)], LOG_FLOOR)))


def loss_out(p):
    """Negative log-likelihood averaged over all classes.

    Minimal exactly at the uniform vector, where it equals log(q); driving
    this loss down is the same as driving the softmax entropy up.
    """
    p = np.asarray(p, dtype=np.float64)
    return float(-np.mean(np.log(np.maximum(p, LOG_FLOOR))))


def overall_loss(probs_in, y_in, probs_out, ood_weight):
    """Convex combination of the two batch-mean losses."""
    lam = float(ood_weight)
    if not 0.0 <= lam <= 1.0:
        raise ValueError("ood_weight must lie in [0, 1]")
    total = 0.0
    if lam < 1.0 and len(probs_in):
        probs_in = np.maximum(np.asarray(probs_in, dtype=np.float64), LOG_FLOOR)
        picked = probs_in[np.arange(len(y_in)), np.asarray(y_in, dtype=np.int64)]
        total += (1.0 - lam) * float(-np.log(picked).mean())
    if lam > 0.0 and len(probs_out):
        probs_out = np.maximum(np.asarray(probs_out, dtype=np.float64), LOG_FLOOR)
        total += lam * float(-np.log(probs_out).mean(axis=1).mean())
    return total


def loss_and_grads(model, X_in, y_in, X_out, ood_weight, dropout_rng=None):
    """Overall loss and analytic parameter gradients for one mini-batch."""
    lam = float(ood_weight)
    q = model.n_classes
    grads_w = [np.zeros_like(w) for w in model.weights]
    grads_b = [np.zeros_like(b) for b in model.biases]
    total = 0.0

    if len(X_in):
        probs, caches = model._forward(X_in, dropout_rng)
        idx = np.arange(len(X_in))
        y_in = np.asarray(y_in, dtype=np.int64)
        total += (1.0 - lam) * float(
            -np.log(np.maximum(probs[idx, y_in], LOG_FLOOR)).mean()
        )
        dlogits = probs.copy()
        dlogits[idx, y_in] -= 1.0
        dlogits *= (1.0 - lam) / len(X_in)
        gw, gb = model._backward(caches, dlogits)
        for acc, g in zip(grads_w, gw):
            acc += g
        for acc, g in zip(grads_b, gb):
            acc += g

    if len(X_out):
        probs, caches = model._forward(X_out, dropout_rng)
        total += lam * float(
            -np.log(np.maximum(probs, LOG_FLOOR)).mean(axis=1).mean()
        )
        dlogits = (probs - 1.0 / q) * (lam / len(X_out))
        gw, gb = model._backward(caches, dlogits)
        for acc, g in zip(grads_w, gw):
            acc += g
        for acc, g in zip(grads_b, gb):
            acc += g

    return total, grads_w, grads_b


def gradient_check(model, X_in, y_in, X_out, ood_weight, step=1e-5):
    """Worst relative error of analytic vs central-difference gradients."""
    _, gw, gb = loss_and_grads(model, X_in, y_in, X_out, ood_weight)
    analytic = np.concatenate([g.ravel() for g in gw + gb])
    theta = model.flat_params()
    numeric = np.zeros_like(theta)
    probe = ToyModel([w.copy() for w in model.weights],
                     [b.copy() for b in model.biases], model.dropout)
    for i in range(theta.size):
        for sign, slot in ((1.0, 0), (-1.0, 1)):
            shifted = theta.copy()
            shifted[i] += sign * step
            probe.set_flat_params(shifted)
            p_in = probe.predict_proba(X_in) if len(X_in) else np.zeros((0, model.n_classes))
            p_out = probe.predict_proba(X_out) if len(X_out) else np.zeros((0, model.n_classes))
            value = overall_loss(p_in, y_in, p_out, ood_weight)
            numeric[i] += value if slot == 0 else -value
    numeric /= 2.0 * step
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))


# ---------------------------------------------------------------------------
# training

def _crop(array, crop_size, rng):
    if not crop_size or crop_size >= min(array.shape[0], array.shape[1]):
        return array
    h0 = int(rng.integers(0, array.shape[0] - crop_size + 1))
    w0 = int(rng.integers(0, array.shape[1] - crop_size + 1))
    return array[h0 : h0 + crop_size, w0 : w0 + crop_size]


def _epoch_pixels(scenes, crop_size, rng, in_distribution):
    """Flatten (optionally cropped) scenes into a pixel pool."""
    feats, labels = [], []
    for scene in scenes:
        stacked = np.concatenate(
            [scene.features.values.astype(np.float64),
             scene.labels.labels[:, :, None].astype(np.float64)],
            axis=2,
        )
        cropped = _crop(stacked, crop_size, rng)
        f = cropped[:, :, :-1].reshape(-1, scene.features.num_features)
        l = cropped[:, :, -1].reshape(-1).astype(np.int64)
        if in_distribution:
            keep = (l >= 0) & (l < scene.labels.num_classes)
            f, l = f[keep], l[keep]
        feats.append(f)
        labels.append(l)
    return np.concatenate(feats), np.concatenate(labels)


def train(config, in_scenes, proxy_scenes=(), init_model=None):
    """Mini-batch SGD on the two-term objective; returns the fitted model.

    Proxy pixels are resampled every epoch at ``config.mix_ratio`` per
    in-distribution pixel. Passing ``init_model`` warm-starts from its
    weights (fine-tuning a trained classifier instead of starting fresh);
    the supplied model is left untouched. The per-epoch mean objective is
    recorded on ``model.loss_trace_``; a non-finite loss aborts with
    :class:`NumericalError`.
    """
    if not in_scenes:
        raise ValueError("need at least one in-distribution scene")
    if config.ood_weight > 0.0 and not proxy_scenes:
        raise ValueError("ood_weight > 0 requires proxy scenes")
    d = in_scenes[0].features.num_features
    q = in_scenes[0].labels.num_classes
    if init_model is not None:
        model = ToyModel([w.copy() for w in init_model.weights],
                         [b.copy() for b in init_model.biases],
                         config.dropout)
    else:
        model = ToyModel.initialize(d, config.hidden, q,
                                    seed=config.seed, dropout=config.dropout)
    params = model.weights + model.biases
    adam = _AdamState(params) if config.optimizer == "adam" else None
    trace = []
    for epoch in range(config.epochs):
        rng = np.random.default_rng([int(config.seed), 211, epoch])
        X_in, y_in = _epoch_pixels(in_scenes, config.crop_size, rng, True)
        perm = rng.permutation(len(X_in))
        X_in, y_in = X_in[perm], y_in[perm]
        n_out_total = 0
        X_out = np.zeros((0, d))
        if config.ood_weight > 0.0 and config.mix_ratio > 0.0:
            pool, _ = _epoch_pixels(proxy_scenes, config.crop_size, rng, False)
            n_out_total = max(1, math.ceil(len(X_in) * config.mix_ratio))
            picks = rng.choice(len(pool), size=n_out_total,
                               replace=n_out_total > len(pool))
            X_out = pool[picks]
        dropout_rng = (np.random.default_rng([int(config.seed), 223, epoch])
                       if config.dropout > 0.0 else None)

        epoch_losses = []
        n_batches = max(1, math.ceil(len(X_in) / config.batch_size))
        for b in range(n_batches):
            lo = b * config.batch_size
            hi = min(len(X_in), lo + config.batch_size)
            out_lo = round(lo * n_out_total / len(X_in)) if len(X_in) else 0
            out_hi = round(hi * n_out_total / len(X_in)) if len(X_in) else 0
            loss, gw, gb = loss_and_grads(
                model, X_in[lo:hi], y_in[lo:hi], X_out[out_lo:out_hi],
                config.ood_weight, dropout_rng,
            )
            if not np.isfinite(loss):
                raise NumericalError(
                    f"training diverged at epoch {epoch}, batch {b}: loss={loss}"
                )
            if adam is not None:
                adam.update(params, gw + gb, config.learning_rate)
            else:
                for W, g in zip(model.weights, gw):
                    W -= config.learning_rate * g
                for bias, g in zip(model.biases, gb):
                    bias -= config.learning_rate * g
            epoch_losses.append(loss)
        trace.append(float(np.mean(epoch_losses)))
    model.loss_trace_ = trace
    model.config_ = config
    return model


def infer(model, features, return_penultimate=False):
    """Per-pixel forward pass over a feature map, dropout disabled."""
    values = features.values if isinstance(features, FeatureMap) else np.asarray(features)
    h, w, d = values.shape
    X = values.reshape(-1, d).astype(np.float64)
    probs = model.predict_proba(X)
    softmax = SoftmaxMap(probs.reshape(h, w, model.n_classes).astype(np.float32))
    if not return_penultimate:
        return softmax
    penult = model.penultimate(X).reshape(h, w, -1).astype(np.float32)
    return softmax, FeatureMap(penult)

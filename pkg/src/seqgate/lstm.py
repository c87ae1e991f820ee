"""Single-layer LSTM next-step model trained from scratch with BPTT.

Plain numpy, float64 throughout. The stacked gate matrices use the order
(i, f, g, o): input gate, forget gate, candidate, output gate. Training is
mini-batch SGD with a fixed learning rate and global gradient-norm
clipping; batches are bucketed by sequence length so no padding is needed
and runs are exactly reproducible for a fixed seed.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import CONTINUOUS, DISCRETE, Sequence, SequenceDataset
from .errors import DataError, NumericalError
from .validation import check_dataset, check_sequence


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    z = logits - logits.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


class LSTMBackbone(BaseEstimator):
    """Next-step sequence model: embedding + LSTM cell + output projection.

    Discrete mode scores a probability vector over the catalog via softmax;
    continuous mode predicts a single real value. The final hidden state of
    a sequence doubles as its behavior embedding.

    Parameters mirror the usual conventions: all constructor arguments are
    hyperparameters, fitted state lives in trailing-underscore attributes.
    """

    def __init__(
        self,
        embed_dim: int = 32,
        hidden_dim: int = 64,
        epochs: int = 5,
        batch_size: int = 256,
        learning_rate: float = 0.001,
        seed: int = 0,
        mode: str = DISCRETE,
        clip_norm: float = 5.0,
        optimizer: str = "sgd",
    ):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.mode = mode
        self.clip_norm = clip_norm
        self.optimizer = optimizer

    # ------------------------------------------------------------------
    # parameters

    def _check_config(self):
        if min(self.embed_dim, self.hidden_dim, self.epochs, self.batch_size) < 1:
            raise DataError("embed_dim, hidden_dim, epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be > 0")
        if self.mode not in (DISCRETE, CONTINUOUS):
            raise DataError(f"unknown mode '{self.mode}'")
        if self.optimizer not in ("sgd", "adam"):
            raise DataError(f"unknown optimizer '{self.optimizer}'")

    def _init_params(self, rng: np.random.Generator, n_items: int) -> dict:
        d, h = self.embed_dim, self.hidden_dim
        scale = 1.0 / np.sqrt(h)

        def u(*shape):
            return rng.uniform(-scale, scale, size=shape)

        params = {}
        if self.mode == DISCRETE:
            params["embed"] = u(n_items, d)
        else:
            params["w_in"] = u(d)
            params["b_in"] = u(d)
        params["wx"] = u(d, 4 * h)
        params["wh"] = u(h, 4 * h)
        params["b"] = u(4 * h)
        out_dim = n_items if self.mode == DISCRETE else 1
        params["wout"] = u(h, out_dim)
        params["bout"] = u(out_dim)
        return params

    def param_dict(self) -> dict:
        """Live references to the fitted parameter arrays (fixed key order)."""
        self._require_fitted()
        return self.params_

    def _require_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("backbone is not fitted")

    # ------------------------------------------------------------------
    # forward / loss / gradients

    def _embed_inputs(self, X: np.ndarray) -> np.ndarray:
        p = self.params_
        if self.mode == DISCRETE:
            return p["embed"][X]
        return X[..., None] * p["w_in"] + p["b_in"]

    def _forward_stack(self, X: np.ndarray) -> dict:
        """Run the recurrence over a rectangular batch X of shape (B, T)."""
        p = self.params_
        h_dim = self.hidden_dim
        B, T = X.shape
        x_emb = self._embed_inputs(X)
        I = np.empty((B, T, h_dim))
        F = np.empty((B, T, h_dim))
        G = np.empty((B, T, h_dim))
        O = np.empty((B, T, h_dim))
        C = np.empty((B, T, h_dim))
        TC = np.empty((B, T, h_dim))
        H = np.empty((B, T, h_dim))
        h = np.zeros((B, h_dim))
        c = np.zeros((B, h_dim))
        for t in range(T):
            z = x_emb[:, t] @ p["wx"] + h @ p["wh"] + p["b"]
            i = _sigmoid(z[:, :h_dim])
            f = _sigmoid(z[:, h_dim : 2 * h_dim])
            g = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
            o = _sigmoid(z[:, 3 * h_dim :])
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            I[:, t], F[:, t], G[:, t], O[:, t] = i, f, g, o
            C[:, t], TC[:, t], H[:, t] = c, tc, h
        return {"X": X, "x_emb": x_emb, "I": I, "F": F, "G": G, "O": O, "C": C, "TC": TC, "H": H}

    def _forward_loss(self, X: np.ndarray, target: np.ndarray):
        """Mean next-step loss over all positions of the batch."""
        cache = self._forward_stack(X)
        p = self.params_
        H = cache["H"]
        if self.mode == DISCRETE:
            logits = H @ p["wout"] + p["bout"]
            z = logits - logits.max(axis=-1, keepdims=True)
            logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
            nll = -np.take_along_axis(logp, target[..., None], axis=-1)
            loss = float(nll.mean())
            cache["logp"] = logp
        else:
            preds = (H @ p["wout"])[..., 0] + p["bout"][0]
            loss = float(((preds - target) ** 2).mean())
            cache["preds"] = preds
        cache["target"] = target
        return loss, cache

    def _backward(self, cache: dict) -> dict:
        p = self.params_
        h_dim = self.hidden_dim
        X, x_emb, target = cache["X"], cache["x_emb"], cache["target"]
        I, F, G, O = cache["I"], cache["F"], cache["G"], cache["O"]
        C, TC, H = cache["C"], cache["TC"], cache["H"]
        B, T = X.shape
        count = B * T

        if self.mode == DISCRETE:
            dlogits = np.exp(cache["logp"])
            flat = dlogits.reshape(-1, dlogits.shape[-1])
            flat[np.arange(count), target.ravel()] -= 1.0
            dlogits /= count
            dwout = np.einsum("bth,btv->hv", H, dlogits)
            dbout = dlogits.sum(axis=(0, 1))
            dH_out = dlogits @ p["wout"].T
        else:
            dpred = 2.0 * (cache["preds"] - target) / count
            dwout = np.einsum("bth,bt->h", H, dpred)[:, None]
            dbout = np.array([dpred.sum()])
            dH_out = dpred[..., None] * p["wout"][:, 0]

        grads = {k: np.zeros_like(v) for k, v in p.items()}
        grads["wout"], grads["bout"] = dwout, dbout
        dx_emb = np.empty_like(x_emb)
        dh_next = np.zeros((B, h_dim))
        dc_next = np.zeros((B, h_dim))
        for t in range(T - 1, -1, -1):
            dh = dH_out[:, t] + dh_next
            i, f, g, o = I[:, t], F[:, t], G[:, t], O[:, t]
            tc = TC[:, t]
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            c_prev = C[:, t - 1] if t > 0 else np.zeros((B, h_dim))
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_next = dc * f
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            h_prev = H[:, t - 1] if t > 0 else np.zeros((B, h_dim))
            grads["wx"] += x_emb[:, t].T @ dz
            grads["wh"] += h_prev.T @ dz
            grads["b"] += dz.sum(axis=0)
            dx_emb[:, t] = dz @ p["wx"].T
            dh_next = dz @ p["wh"].T

        if self.mode == DISCRETE:
            np.add.at(grads["embed"], X.ravel(), dx_emb.reshape(-1, self.embed_dim))
        else:
            grads["w_in"] = (X[..., None] * dx_emb).sum(axis=(0, 1))
            grads["b_in"] = dx_emb.sum(axis=(0, 1))
        return grads

    def _loss_and_grads(self, X: np.ndarray, target: np.ndarray):
        loss, cache = self._forward_loss(X, target)
        return loss, self._backward(cache)

    # ------------------------------------------------------------------
    # training

    def _make_batches(self, seqs, rng: np.random.Generator):
        """Length-bucketed batches, shuffled within buckets and across batches."""
        by_len: dict = {}
        for idx, s in enumerate(seqs):
            by_len.setdefault(len(s), []).append(idx)
        batches = []
        for length in sorted(by_len):
            idx = np.array(by_len[length])
            idx = idx[rng.permutation(len(idx))]
            for lo in range(0, len(idx), self.batch_size):
                batches.append(idx[lo : lo + self.batch_size])
        order = rng.permutation(len(batches))
        return [batches[i] for i in order]

    def fit(self, dataset: SequenceDataset):
        """Fit on all dataset sequences of length >= 2. Returns self."""
        self._check_config()
        check_dataset(dataset, mode=self.mode)
        seqs = [s for s in dataset.sequences if len(s) >= 2]
        if not seqs:
            raise DataError("no trainable sequences (all shorter than 2 events)")
        self.n_items_ = dataset.n_items if self.mode == DISCRETE else 0

        rng = np.random.default_rng(self.seed)
        self.params_ = self._init_params(rng, self.n_items_)
        self._opt_state = None
        if self.optimizer == "adam":
            self._opt_state = {
                "step": 0,
                "m": {k: np.zeros_like(v) for k, v in self.params_.items()},
                "v": {k: np.zeros_like(v) for k, v in self.params_.items()},
            }

        arrays = [s.items if self.mode == DISCRETE else s.values for s in seqs]
        history = []
        for _ in range(self.epochs):
            total, positions = 0.0, 0
            for batch_idx in self._make_batches(seqs, rng):
                rows = [arrays[i] for i in batch_idx]
                block = np.stack(rows)
                X, target = block[:, :-1], block[:, 1:]
                loss, grads = self._loss_and_grads(X, target)
                if not np.isfinite(loss):
                    raise NumericalError("training diverged")
                self._apply_update(grads)
                n_pos = X.size
                total += loss * n_pos
                positions += n_pos
            history.append(total / positions)
        self.loss_history_ = history
        return self

    def _apply_update(self, grads: dict):
        norm_sq = sum(float((g * g).sum()) for g in grads.values())
        scale = 1.0
        norm = np.sqrt(norm_sq)
        if norm > self.clip_norm:
            scale = self.clip_norm / norm
        lr = self.learning_rate
        if self._opt_state is None:  # plain SGD, the default
            for name, g in grads.items():
                self.params_[name] -= lr * scale * g
            return
        # Adam with the usual decay constants; fully deterministic.
        state = self._opt_state
        state["step"] += 1
        t = state["step"]
        b1, b2, eps = 0.9, 0.999, 1e-8
        bias1 = 1.0 - b1**t
        bias2 = 1.0 - b2**t
        for name, g in grads.items():
            g = g * scale
            m = state["m"][name]
            v = state["v"][name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            self.params_[name] -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)

    # ------------------------------------------------------------------
    # inference

    def _sequence_array(self, seq: Sequence) -> np.ndarray:
        check_sequence(seq, self.mode, min_len=1,
                       n_items=self.n_items_ if self.mode == DISCRETE else None)
        arr = seq.items if self.mode == DISCRETE else seq.values
        return arr[None, :]

    def forward(self, seq: Sequence):
        """Hidden states (n, hidden_dim) and the behavior embedding h_n."""
        self._require_fitted()
        cache = self._forward_stack(self._sequence_array(seq))
        states = cache["H"][0]
        return states, states[-1].copy()

    def _project(self, h: np.ndarray):
        p = self.params_
        if self.mode == DISCRETE:
            return softmax(h @ p["wout"] + p["bout"])
        return float(h @ p["wout"][:, 0] + p["bout"][0])

    def score_next(self, seq: Sequence):
        """Next-step scores after consuming the whole sequence.

        Discrete: probability vector over the catalog. Continuous: scalar.
        """
        _, e = self.forward(seq)
        return self._project(e)

    def embed(self, seq: Sequence) -> np.ndarray:
        return self.forward(seq)[1]

    def transform(self, sequences) -> np.ndarray:
        """Behavior embeddings for many sequences, batched by length."""
        self._require_fitted()
        seqs = list(sequences)
        out = np.empty((len(seqs), self.hidden_dim))
        by_len: dict = {}
        for idx, s in enumerate(seqs):
            check_sequence(s, self.mode, min_len=1,
                           n_items=self.n_items_ if self.mode == DISCRETE else None)
            by_len.setdefault(len(s), []).append(idx)
        for length, idx in by_len.items():
            block = np.stack([
                seqs[i].items if self.mode == DISCRETE else seqs[i].values for i in idx
            ])
            cache = self._forward_stack(block)
            out[idx] = cache["H"][:, -1]
        return out

    def score_many(self, sequences):
        """Batched score_next over many sequences (same math, bucketed)."""
        emb = self.transform(sequences)
        p = self.params_
        if self.mode == DISCRETE:
            return softmax(emb @ p["wout"] + p["bout"])
        return emb @ p["wout"][:, 0] + p["bout"][0]


def grad_check(model: LSTMBackbone, seq: Sequence, epsilon: float = 1e-5) -> float:
    """Max relative error between BPTT and central finite differences.

    Intended for tiny models only; the sweep touches every parameter entry
    twice, so cost grows with parameter count.
    """
    if model.hidden_dim > 4:
        raise DataError("grad_check requires hidden_dim <= 4")
    arr = (seq.items if model.mode == DISCRETE else seq.values)[None, :]
    X, target = arr[:, :-1], arr[:, 1:]
    _, grads = model._loss_and_grads(X, target)
    worst = 0.0
    for name, param in model.params_.items():
        flat = param.reshape(-1)
        gflat = grads[name].reshape(-1)
        for j in range(flat.shape[0]):
            orig = flat[j]
            flat[j] = orig + epsilon
            up, _ = model._forward_loss(X, target)
            flat[j] = orig - epsilon
            down, _ = model._forward_loss(X, target)
            flat[j] = orig
            numeric = (up - down) / (2.0 * epsilon)
            denom = max(abs(gflat[j]) + abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[j] - numeric) / denom)
    return worst

"""Fully connected Q-value network and optimizer, written out by hand.

The learning core deliberately avoids autodiff frameworks: forward pass,
backprop, and Adam are explicit numpy so every arithmetic step is pinned
down and reproducible from the seed alone.

Hot-path methods reuse preallocated scratch buffers keyed by batch size.
Every scratch variant performs the same floating-point operations in the
same order as the naive expression it replaces, so results are bit-equal;
arrays that escape to callers are still freshly allocated per call.
"""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np

GradientList = list[tuple[np.ndarray, np.ndarray]]


class QNetwork:
    """Multilayer perceptron with ReLU hidden layers and a linear head.

    Weights use Glorot uniform init from the supplied generator; biases
    start at zero.  Arrays are float64 throughout, stored as ``(fan_in,
    fan_out)`` so batches multiply as ``x @ w + b``.
    """

    def __init__(self, layer_sizes: Sequence[int], rng: np.random.Generator):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output layers")
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self._fwd_scratch: dict[int, list[np.ndarray]] = {}
        self._bwd_scratch: dict[int, tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]] = {}

    def parameters(self) -> list[np.ndarray]:
        """Flat list of parameter arrays, weights and biases interleaved."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy_from(self, other: "QNetwork") -> None:
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine[...] = theirs

    def _hidden_buffers(self, n: int) -> list[np.ndarray]:
        bufs = self._fwd_scratch.get(n)
        if bufs is None:
            bufs = [np.empty((n, size)) for size in self.layer_sizes[1:-1]]
            self._fwd_scratch[n] = bufs
        return bufs

    def _backward_buffers(
        self, n: int
    ) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
        bufs = self._bwd_scratch.get(n)
        if bufs is None:
            acts = [np.empty((n, size)) for size in self.layer_sizes[1:]]
            ups = [np.empty((n, size)) for size in self.layer_sizes[1:]]
            masks = [np.empty((n, size), dtype=bool) for size in self.layer_sizes[1:-1]]
            bufs = (acts, ups, masks)
            self._bwd_scratch[n] = bufs
        return bufs

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_batch(np.asarray(x, dtype=float)[None, :])[0]

    def forward_batch(self, xs: np.ndarray) -> np.ndarray:
        act = np.asarray(xs, dtype=float)
        last = len(self.weights) - 1
        hidden = self._hidden_buffers(act.shape[0])
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if i < last:
                buf = hidden[i]
                np.matmul(act, w, out=buf)
                buf += b
                np.maximum(buf, 0.0, out=buf)
                act = buf
            else:
                # final layer escapes to the caller: allocate fresh
                act = act @ w + b
        return act

    def gradients(
        self,
        xs: np.ndarray,
        actions: np.ndarray,
        targets: np.ndarray,
        sample_weights: np.ndarray,
    ) -> tuple[float, np.ndarray, GradientList]:
        """Weighted squared-error loss on the taken actions.

        Returns ``(loss, td_errors, grads)`` where ``td_errors`` are the
        signed residuals of the taken-action values and ``grads`` holds one
        ``(d_weight, d_bias)`` pair per layer.
        """
        xs = np.asarray(xs, dtype=float)
        n = xs.shape[0]
        last = len(self.weights) - 1
        acts, ups, masks = self._backward_buffers(n)

        activations = [xs]
        act = xs
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            buf = acts[i]
            np.matmul(act, w, out=buf)
            buf += b
            if i < last:
                np.maximum(buf, 0.0, out=buf)
            activations.append(buf)
            act = buf

        rows = np.arange(n)
        q_taken = activations[-1][rows, actions]
        td_errors = q_taken - targets
        loss = float(np.mean(sample_weights * td_errors**2))

        upstream = ups[last]
        upstream.fill(0.0)
        upstream[rows, actions] = 2.0 * sample_weights * td_errors / n

        grads: GradientList = [None] * len(self.weights)  # type: ignore[list-item]
        for i in range(last, -1, -1):
            # grads escape to the optimizer/caller: allocate fresh
            grads[i] = (activations[i].T @ upstream, upstream.sum(axis=0))
            if i > 0:
                nxt = ups[i - 1]
                np.matmul(upstream, self.weights[i].T, out=nxt)
                mask = masks[i - 1]
                np.greater(activations[i], 0.0, out=mask)
                np.multiply(nxt, mask, out=nxt)
                upstream = nxt
        return loss, td_errors, grads


class Adam:
    """Adam with bias correction, applied in place to a parameter list."""

    def __init__(
        self,
        params: Sequence[np.ndarray],
        learning_rate: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._s1 = [np.empty_like(p) for p in params]
        self._s2 = [np.empty_like(p) for p in params]
        self._finite = [np.empty(p.shape, dtype=bool) for p in params]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        for g, f in zip(grads, self._finite):
            np.isfinite(g, out=f)
            if not f.all():
                raise FloatingPointError("non-finite gradient")
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        c1 = 1.0 - self.beta1
        c2 = 1.0 - self.beta2
        # lr*(m/bias1)/(sqrt(v/bias2)+eps) regrouped to save two passes:
        # (lr*sqrt(bias2)/bias1) * m / (sqrt(v) + eps*sqrt(bias2))
        sqrt_bias2 = np.sqrt(bias2)
        step_scale = self.learning_rate * sqrt_bias2 / bias1
        eps_scaled = self.epsilon * sqrt_bias2
        for p, g, m, v, s1, s2 in zip(params, grads, self.m, self.v, self._s1, self._s2):
            m *= self.beta1
            np.multiply(g, c1, out=s1)
            m += s1
            v *= self.beta2
            np.multiply(g, c2, out=s1)
            np.multiply(s1, g, out=s1)
            v += s1
            np.sqrt(v, out=s2)
            s2 += eps_scaled
            np.divide(m, s2, out=s1)
            s1 *= step_scale
            p -= s1

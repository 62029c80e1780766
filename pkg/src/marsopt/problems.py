"""Synthetic optimization problems with exact full gradients.

Every oracle exposes both a stochastic gradient (driven by an explicit
:class:`Batch`, so the same randomness can be replayed at different parameter
vectors) and the exact full gradient / full loss. That makes the gradient
tracking error of a momentum buffer directly measurable, which is the point of
the whole suite.

Randomness layout per oracle: the seed owns three substreams, 0 for problem
construction (data, rotations, planted weights), 1 for the initial point, and
2 for the per-step batch draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkit import RngStream

__all__ = [
    "Batch",
    "GradientOracle",
    "make_noisy_quadratic",
    "make_logistic",
    "make_noisy_rosenbrock",
    "make_mlp",
    "finite_diff_grad",
]

_CONSTRUCT, _INIT, _BATCH = 0, 1, 2


@dataclass
class Batch:
    """One step's realized randomness: a noise draw or an index subset.

    Re-querying an oracle with the same Batch at a different parameter vector
    reuses the same randomness, which the exact correction mode requires.
    """

    step: int
    noise: np.ndarray | None = None
    indices: np.ndarray | None = None


class GradientOracle:
    """Base interface shared by the synthetic problems."""

    dim: int
    block_shapes: list[tuple[int, ...]]
    smoothness: float | None = None

    def sample_batch(self, t: int) -> Batch:
        raise NotImplementedError

    def loss(self, x: np.ndarray) -> float:
        """Full (expected / all-data) objective F(x)."""
        raise NotImplementedError

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stochastic_grad(self, x: np.ndarray, batch: Batch) -> np.ndarray:
        raise NotImplementedError

    def initial_point(self) -> np.ndarray:
        raise NotImplementedError


class _NoisyQuadratic(GradientOracle):
    """f(x, xi) = 0.5 (x - mu - sigma*xi)^T A (x - mu - sigma*xi).

    A = R diag(spectrum) R^T for a seeded random rotation R, so the stochastic
    gradient A(x - mu - sigma*xi) is unbiased for A(x - mu) and the gradient
    difference at two points is exactly A(x - y), independent of the noise.
    """

    def __init__(self, dim, spectrum, sigma, seed, rotate=True, mu=None,
                 batch_size=1, block_shapes=None, start_radius=3.0):
        spectrum = np.asarray(spectrum, dtype=np.float64)
        if spectrum.shape != (dim,):
            raise ValueError("spectrum must have one entry per dimension")
        if np.any(spectrum <= 0):
            raise ValueError("spectrum entries must be positive")
        root = RngStream(seed)
        cons = root.substream(_CONSTRUCT)
        if rotate:
            q, r = np.linalg.qr(cons.gauss_matrix(dim, dim))
            q *= np.sign(np.diag(r))
            self.a = (q * spectrum) @ q.T
        else:
            self.a = np.diag(spectrum)
        if mu is None:
            self.mu = cons.gauss(dim)
        else:
            self.mu = np.asarray(mu, dtype=np.float64)
        self.dim = dim
        self.sigma = float(sigma)
        self.batch_size = int(batch_size)
        self.smoothness = float(np.max(spectrum))
        self.block_shapes = block_shapes or [(dim,)]
        if sum(int(np.prod(s)) for s in self.block_shapes) != dim:
            raise ValueError("block_shapes must cover exactly dim entries")
        self._init_rng = root.substream(_INIT)
        self._batch_rng = root.substream(_BATCH)
        self._start_radius = float(start_radius)

    def sample_batch(self, t: int) -> Batch:
        draws = self._batch_rng.gauss(self.dim * self.batch_size)
        noise = draws.reshape(self.batch_size, self.dim).mean(axis=0)
        return Batch(step=t, noise=noise)

    def loss(self, x):
        r = x - self.mu
        return 0.5 * float(r @ (self.a @ r))

    def full_grad(self, x):
        return self.a @ (x - self.mu)

    def stochastic_grad(self, x, batch):
        return self.a @ (x - self.mu - self.sigma * batch.noise)

    def stochastic_loss(self, x, batch):
        r = x - self.mu - self.sigma * batch.noise
        return 0.5 * float(r @ (self.a @ r))

    def initial_point(self):
        r = self._init_rng.gauss(self.dim)
        return self.mu + self._start_radius * r / np.linalg.norm(r)


def make_noisy_quadratic(dim, spectrum, sigma, seed, rotate=True, mu=None,
                         batch_size=1, block_shapes=None, start_radius=3.0) -> GradientOracle:
    return _NoisyQuadratic(dim, spectrum, sigma, seed, rotate=rotate, mu=mu,
                           batch_size=batch_size, block_shapes=block_shapes,
                           start_radius=start_radius)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class _Logistic(GradientOracle):
    """Binary logistic regression on a seeded synthetic dataset.

    Labels are Bernoulli draws under a planted weight vector; the objective is
    the mean cross-entropy plus an l2 term (included in both the stochastic
    and the full gradient).
    """

    def __init__(self, n, dim, batch_size, seed, l2=1e-3):
        if not 1 <= batch_size <= n:
            raise ValueError("batch_size must lie in [1, n]")
        root = RngStream(seed)
        cons = root.substream(_CONSTRUCT)
        self.x_data = cons.gauss_matrix(n, dim)
        planted = cons.gauss(dim) * (2.0 / np.sqrt(dim))
        p = _sigmoid(self.x_data @ planted)
        self.y = (cons.uniform(n) < p).astype(np.float64)
        self.n = n
        self.dim = dim
        self.batch_size = int(batch_size)
        self.l2 = float(l2)
        self.block_shapes = [(dim,)]
        # hessian of the CE term is bounded by X^T X / (4n)
        self.smoothness = float(np.linalg.norm(self.x_data, 2) ** 2 / (4.0 * n) + self.l2)
        self._init_rng = root.substream(_INIT)
        self._batch_rng = root.substream(_BATCH)

    def sample_batch(self, t):
        idx = self._batch_rng.choice(self.n, self.batch_size, replace=False)
        return Batch(step=t, indices=np.sort(idx))

    def _ce_loss(self, x, rows, labels):
        z = rows @ x
        return float(np.mean(np.logaddexp(0.0, z) - labels * z))

    def _ce_grad(self, x, rows, labels):
        z = rows @ x
        return rows.T @ (_sigmoid(z) - labels) / rows.shape[0]

    def loss(self, x):
        return self._ce_loss(x, self.x_data, self.y) + 0.5 * self.l2 * float(x @ x)

    def full_grad(self, x):
        return self._ce_grad(x, self.x_data, self.y) + self.l2 * x

    def stochastic_grad(self, x, batch):
        rows = self.x_data[batch.indices]
        labels = self.y[batch.indices]
        return self._ce_grad(x, rows, labels) + self.l2 * x

    def stochastic_loss(self, x, batch):
        rows = self.x_data[batch.indices]
        labels = self.y[batch.indices]
        return self._ce_loss(x, rows, labels) + 0.5 * self.l2 * float(x @ x)

    def initial_point(self):
        return 0.5 * self._init_rng.gauss(self.dim)


def make_logistic(n, dim, batch_size, seed, l2=1e-3) -> GradientOracle:
    return _Logistic(n, dim, batch_size, seed, l2=l2)


class _NoisyRosenbrock(GradientOracle):
    """Classical Rosenbrock sum with additive Gaussian noise on the gradient."""

    def __init__(self, dim, sigma, seed):
        if dim < 2:
            raise ValueError("rosenbrock needs dim >= 2")
        root = RngStream(seed)
        self.dim = dim
        self.sigma = float(sigma)
        self.block_shapes = [(dim,)]
        self._batch_rng = root.substream(_BATCH)

    def sample_batch(self, t):
        return Batch(step=t, noise=self._batch_rng.gauss(self.dim))

    def loss(self, x):
        return float(np.sum((1.0 - x[:-1]) ** 2 + 100.0 * (x[1:] - x[:-1] ** 2) ** 2))

    def full_grad(self, x):
        g = np.zeros_like(x)
        diff = x[1:] - x[:-1] ** 2
        g[:-1] += -2.0 * (1.0 - x[:-1]) - 400.0 * x[:-1] * diff
        g[1:] += 200.0 * diff
        return g

    def stochastic_grad(self, x, batch):
        return self.full_grad(x) + self.sigma * batch.noise

    def stochastic_loss(self, x, batch):
        return self.loss(x)

    def initial_point(self):
        x0 = np.ones(self.dim)
        x0[::2] = -1.2
        return x0


def make_noisy_rosenbrock(dim, sigma, seed) -> GradientOracle:
    return _NoisyRosenbrock(dim, sigma, seed)


class _TanhMLP(GradientOracle):
    """Feed-forward tanh classifier with hand-written backprop.

    ``layers`` lists the widths [d_in, hidden..., n_classes]; parameters are
    exposed as alternating weight-matrix and bias-vector blocks. Data and
    labels come from a seeded linear teacher, so the task is learnable but not
    separable. tanh (rather than relu) keeps the loss smooth, which the
    finite-difference checks rely on.
    """

    def __init__(self, layers, n, batch_size, seed):
        layers = [int(w) for w in layers]
        if len(layers) < 3:
            raise ValueError("need at least one hidden layer: [d_in, hidden..., classes]")
        if not 1 <= batch_size <= n:
            raise ValueError("batch_size must lie in [1, n]")
        root = RngStream(seed)
        cons = root.substream(_CONSTRUCT)
        d_in, n_classes = layers[0], layers[-1]
        self.x_data = cons.gauss_matrix(n, d_in)
        teacher = cons.gauss_matrix(d_in, n_classes)
        scores = self.x_data @ teacher + 0.5 * cons.gauss_matrix(n, n_classes)
        self.y = np.argmax(scores, axis=1)
        self.layers = layers
        self.n = n
        self.batch_size = int(batch_size)
        self.block_shapes = []
        for fan_in, fan_out in zip(layers[:-1], layers[1:]):
            self.block_shapes.append((fan_in, fan_out))
            self.block_shapes.append((fan_out,))
        self.dim = sum(int(np.prod(s)) for s in self.block_shapes)
        self._init_rng = root.substream(_INIT)
        self._batch_rng = root.substream(_BATCH)

    def _unpack(self, x):
        params, pos = [], 0
        for shape in self.block_shapes:
            size = int(np.prod(shape))
            params.append(x[pos:pos + size].reshape(shape))
            pos += size
        return params

    def _forward(self, x, rows):
        params = self._unpack(x)
        h = rows
        hiddens = [h]
        n_layers = len(self.layers) - 1
        for i in range(n_layers):
            w, b = params[2 * i], params[2 * i + 1]
            z = h @ w + b
            h = np.tanh(z) if i < n_layers - 1 else z
            hiddens.append(h)
        return params, hiddens

    def _loss_grad(self, x, rows, labels, want_grad):
        params, hiddens = self._forward(x, rows)
        logits = hiddens[-1]
        logits = logits - logits.max(axis=1, keepdims=True)
        log_z = np.log(np.sum(np.exp(logits), axis=1))
        loss = float(np.mean(log_z - logits[np.arange(len(labels)), labels]))
        if not want_grad:
            return loss, None
        probs = np.exp(logits - log_z[:, None])
        delta = probs
        delta[np.arange(len(labels)), labels] -= 1.0
        delta /= len(labels)
        grads = [None] * len(params)
        n_layers = len(self.layers) - 1
        for i in reversed(range(n_layers)):
            h_in = hiddens[i]
            grads[2 * i] = h_in.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ params[2 * i].T) * (1.0 - hiddens[i] ** 2)
        flat = np.concatenate([g.ravel() for g in grads])
        return loss, flat

    def sample_batch(self, t):
        idx = self._batch_rng.choice(self.n, self.batch_size, replace=False)
        return Batch(step=t, indices=np.sort(idx))

    def loss(self, x):
        loss, _ = self._loss_grad(x, self.x_data, self.y, want_grad=False)
        return loss

    def full_grad(self, x):
        _, g = self._loss_grad(x, self.x_data, self.y, want_grad=True)
        return g

    def stochastic_grad(self, x, batch):
        _, g = self._loss_grad(x, self.x_data[batch.indices], self.y[batch.indices], want_grad=True)
        return g

    def stochastic_loss(self, x, batch):
        loss, _ = self._loss_grad(x, self.x_data[batch.indices], self.y[batch.indices], want_grad=False)
        return loss

    def initial_point(self):
        parts = []
        for shape in self.block_shapes:
            if len(shape) == 2:
                parts.append(self._init_rng.gauss(shape[0] * shape[1]) / np.sqrt(shape[0]))
            else:
                parts.append(np.zeros(shape[0]))
        return np.concatenate(parts)


def make_mlp(layers, n, batch_size, seed) -> GradientOracle:
    return _TanhMLP(layers, n, batch_size, seed)


def finite_diff_grad(oracle: GradientOracle, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the oracle's full loss."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        g[i] = (oracle.loss(x + step) - oracle.loss(x - step)) / (2.0 * h)
    return g

"""A small tape-based reverse-mode autodiff engine.

Only the layers the PVAD architectures use are provided: LSTM, affine,
tanh, FiLM, concatenation/slicing, pooling, cosine scoring and softmax
cross-entropy. Every op works on float64 numpy arrays and records a closure
that maps the output gradient to gradients for its inputs.
"""

from __future__ import annotations

import numpy as np

from . import _kernels


class ShapeError(ValueError):
    pass


class GraphError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, parents=(), backward=None, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape})"


def constant(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _node(value, parents, backward):
    parents = tuple(parents)
    if not any(p.requires_grad for p in parents):
        # nothing upstream needs gradients; don't record
        return Tensor(value)
    return Tensor(value, parents, backward)


# ---------------------------------------------------------------------------
# ops


def affine(x, w, b=None) -> Tensor:
    """``x @ w.T + b`` over the last axis of ``x``; ``w`` is (out, in)."""
    x, w = constant(x), constant(w)
    if w.data.ndim != 2 or x.data.shape[-1] != w.data.shape[1]:
        raise ShapeError(f"affine: input {x.shape} incompatible with weight {w.shape}")
    out = x.data @ w.data.T
    parents = [x, w]
    if b is not None:
        b = constant(b)
        if b.data.shape != (w.data.shape[0],):
            raise ShapeError(f"affine: bias {b.shape} does not match weight {w.shape}")
        out = out + b.data
        parents.append(b)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.data.shape[-1])
        grads = [g @ w.data, g2.T @ x2]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return _node(out, parents, backward)


def tanh(x) -> Tensor:
    x = constant(x)
    y = np.tanh(x.data)
    return _node(y, [x], lambda g: [g * (1.0 - y * y)])


def affine_tanh(x, w, b) -> Tensor:
    return tanh(affine(x, w, b))


def film(h, gamma, beta) -> Tensor:
    """Feature-wise linear modulation ``gamma * h + beta`` (elementwise)."""
    h, gamma, beta = constant(h), constant(gamma), constant(beta)
    if not (h.shape == gamma.shape == beta.shape):
        raise ShapeError(f"film: shapes differ {h.shape}, {gamma.shape}, {beta.shape}")
    out = gamma.data * h.data + beta.data
    return _node(out, [h, gamma, beta], lambda g: [g * gamma.data, g * h.data, g])


def concat(tensors, axis=-1) -> Tensor:
    tensors = [constant(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return np.split(g, sizes, axis=axis)

    return _node(out, tensors, backward)


def slice_last(x, start, stop) -> Tensor:
    x = constant(x)

    def backward(g):
        full = np.zeros_like(x.data)
        full[..., start:stop] = g
        return [full]

    return _node(x.data[..., start:stop], [x], backward)


def repeat_rows(v, n) -> Tensor:
    """Tile a vector ``(D,)`` into ``(n, D)``."""
    v = constant(v)
    if v.data.ndim != 1:
        raise ShapeError("repeat_rows expects a vector")
    out = np.broadcast_to(v.data, (n, v.data.shape[0])).copy()
    return _node(out, [v], lambda g: [g.sum(axis=0)])


def mean_time(x) -> Tensor:
    """Mean over the leading (time) axis."""
    x = constant(x)
    n = x.data.shape[0]
    return _node(x.data.mean(axis=0), [x], lambda g: [np.broadcast_to(g / n, x.data.shape).copy()])


def l2_normalize(x, eps=1e-12) -> Tensor:
    x = constant(x)
    norm = np.sqrt((x.data ** 2).sum(axis=-1, keepdims=True))
    norm = np.maximum(norm, eps)
    y = x.data / norm

    def backward(g):
        return [(g - y * (g * y).sum(axis=-1, keepdims=True)) / norm]

    return _node(y, [x], backward)


def cosine_rows(x, e, eps=1e-12) -> Tensor:
    """Cosine similarity of every row of ``x`` (T, D) against vector ``e``.

    Returns a (T, 1) column. ``e`` is treated as a constant.
    """
    x = constant(x)
    e = np.asarray(e, dtype=np.float64)
    if x.data.ndim != 2 or x.data.shape[1] != e.shape[0]:
        raise ShapeError(f"cosine_rows: {x.shape} vs {e.shape}")
    e_norm = np.linalg.norm(e)
    if e_norm == 0.0:
        raise ShapeError("cosine_rows: zero reference vector")
    eu = e / e_norm
    norm = np.maximum(np.sqrt((x.data ** 2).sum(axis=1, keepdims=True)), eps)
    xu = x.data / norm
    cos = xu @ eu

    def backward(g):
        g = g[:, 0:1]
        return [g * (eu[None, :] - xu * cos[:, None]) / norm]

    return _node(cos[:, None], [x], backward)


def lstm(x, w_ih, w_hh, b, h0=None, c0=None):
    """Full-sequence LSTM layer.

    x is (T, D) or (T, B, D); w_ih (4H, D), w_hh (4H, H), b (4H,).
    Returns ``(outputs, h_T, c_T)`` where outputs has x's rank with last dim H
    and the final states are plain arrays.
    """
    x, w_ih, w_hh, b = constant(x), constant(w_ih), constant(w_hh), constant(b)
    squeeze = x.data.ndim == 2
    xd = x.data[:, None, :] if squeeze else x.data
    if xd.ndim != 3:
        raise ShapeError(f"lstm: expected (T, D) or (T, B, D) input, got {x.shape}")
    G, D = w_ih.data.shape
    H = G // 4
    if G != 4 * H or xd.shape[2] != D or w_hh.data.shape != (G, H) or b.data.shape != (G,):
        raise ShapeError(
            f"lstm: input {x.shape}, w_ih {w_ih.shape}, w_hh {w_hh.shape}, b {b.shape} inconsistent"
        )
    T, B, _ = xd.shape
    if T == 0:
        raise ShapeError("lstm: empty sequence")
    h0 = np.zeros((B, H)) if h0 is None else np.asarray(h0, dtype=np.float64).reshape(B, H)
    c0 = np.zeros((B, H)) if c0 is None else np.asarray(c0, dtype=np.float64).reshape(B, H)

    xproj = np.ascontiguousarray(xd @ w_ih.data.T + b.data)
    w_hh_t = np.ascontiguousarray(w_hh.data.T)
    hs, cs, gates = _kernels.lstm_forward(xproj, w_hh_t, h0, c0)

    def backward(g):
        dhs = np.ascontiguousarray(g[:, None, :] if squeeze else g)
        dz, dw_hh_t, _, _ = _kernels.lstm_backward(dhs, gates, hs, cs, h0, c0, w_hh_t)
        dz2 = dz.reshape(-1, G)
        dx = dz @ w_ih.data
        if squeeze:
            dx = dx[:, 0, :]
        return [dx, dz2.T @ xd.reshape(-1, D), dw_hh_t.T, dz2.sum(axis=0)]

    out = hs[:, 0, :] if squeeze else hs
    node = _node(out, [x, w_ih, w_hh, b], backward)
    return node, hs[-1].copy(), cs[-1].copy()


def softmax(logits):
    """Row-wise softmax of a plain array (max-subtracted)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean over rows of ``-log softmax(logits)[label]``."""
    logits = constant(logits)
    z = logits.data
    single = z.ndim == 1
    z2 = z[None, :] if single else z.reshape(-1, z.shape[-1])
    labels = np.atleast_1d(np.asarray(labels)).reshape(-1)
    C = z2.shape[1]
    if labels.shape[0] != z2.shape[0]:
        raise ShapeError(f"softmax_cross_entropy: {z2.shape[0]} rows but {labels.shape[0]} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"label out of range for {C} classes")
    shifted = z2 - z2.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z2.shape[0])
    losses = logsum - shifted[rows, labels]
    n = z2.shape[0]
    loss = losses.mean()

    def backward(g):
        p = np.exp(shifted - logsum[:, None])
        p[rows, labels] -= 1.0
        return [(g * p / n).reshape(z.shape)]

    return _node(np.asarray(loss), [logits], backward)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor, params=None):
    """Reverse-mode sweep from a scalar ``loss``.

    Sets ``.grad`` on every leaf that requires gradients. If ``params`` (a
    ParameterSet or mapping of name to Tensor) is given, returns a dict of
    gradients with zeros for parameters that did not take part.
    """
    if loss.data.size != 1:
        raise GraphError("backward() needs a scalar loss")
    if loss._backward is None:
        raise GraphError("backward() called on a tensor with no recorded forward graph")
    if params is not None:
        for _, t in params.items():
            t.grad = None

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg

    if params is None:
        return None
    return {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }


# ---------------------------------------------------------------------------
# parameters and optimiser


class ParameterSet:
    """Ordered, uniquely named trainable tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def count(self) -> int:
        return int(sum(t.data.size for t in self._params.values()))

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_arrays(self, arrays):
        for k, t in self._params.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != t.data.shape:
                raise ShapeError(f"parameter {k!r}: expected {t.data.shape}, got {a.shape}")
            t.data = a.copy()

    def round_to_f32(self):
        for t in self._params.values():
            t.data = t.data.astype(np.float32).astype(np.float64)


def init_uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def add_lstm(params, rng, prefix, input_dim, hidden):
    params.add(f"{prefix}.w_ih", init_uniform(rng, (4 * hidden, input_dim), input_dim))
    params.add(f"{prefix}.w_hh", init_uniform(rng, (4 * hidden, hidden), hidden))
    params.add(f"{prefix}.b", np.zeros(4 * hidden))


def add_linear(params, rng, prefix, input_dim, output_dim):
    params.add(f"{prefix}.w", init_uniform(rng, (output_dim, input_dim), input_dim))
    params.add(f"{prefix}.b", np.zeros(output_dim))


def lstm_param_count(input_dim, hidden):
    return 4 * ((input_dim + hidden) * hidden + hidden)


def linear_param_count(input_dim, output_dim):
    return input_dim * output_dim + output_dim


def run_lstm(params, prefix, x, h0=None, c0=None):
    return lstm(x, params[f"{prefix}.w_ih"], params[f"{prefix}.w_hh"], params[f"{prefix}.b"], h0, c0)


def run_linear(params, prefix, x):
    return affine(x, params[f"{prefix}.w"], params[f"{prefix}.b"])


class Adam:
    """Bias-corrected Adam with per-parameter moment buffers."""

    def __init__(self, params: ParameterSet, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self, grads):
        for k, t in self.params.items():
            if k not in grads:
                raise KeyError(f"missing gradient for {k!r}")
            if grads[k].shape != t.data.shape:
                raise ShapeError(f"gradient for {k!r} has shape {grads[k].shape}, expected {t.data.shape}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, t in self.params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            mhat = self.m[k] / c1
            vhat = self.v[k] / c2
            t.data = t.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# gradient checking


def numeric_gradients(loss_fn, params: ParameterSet, eps=1e-6, max_entries=None, rng=None):
    """Central-difference gradients of ``loss_fn()`` w.r.t. ``params``.

    With ``max_entries`` only a random subset of each tensor's entries is
    perturbed; the returned dict maps name to ``(flat_indices, values)``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    out = {}
    for name, t in params.items():
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        vals = np.empty(idx.size)
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + eps
            up = float(loss_fn().data)
            flat[i] = old - eps
            down = float(loss_fn().data)
            flat[i] = old
            vals[j] = (up - down) / (2.0 * eps)
        out[name] = (idx, vals)
    return out


def gradient_check(loss_fn, params: ParameterSet, eps=1e-6, max_entries=None, rng=None):
    """Relative error ``|a - n| / max(|a| + |n|, 1e-12)`` per parameter tensor (norm-wise)."""
    analytic = backward(loss_fn(), params)
    numeric = numeric_gradients(loss_fn, params, eps, max_entries, rng)
    errors = {}
    for name, (idx, vals) in numeric.items():
        a = analytic[name].reshape(-1)[idx]
        denom = max(np.linalg.norm(a) + np.linalg.norm(vals), 1e-12)
        errors[name] = float(np.linalg.norm(a - vals) / denom)
    return errors

"""Dense rank-4 tensor operations with exact gradients.

Every value is a float64 numpy array laid out (batch, channels, height,
width).  Convolutions use same-size zero padding, support dilation and a
binary kernel mask (blind taps are stored but held at exactly 0.0), and
come with hand-derived backward passes.  The Adam optimizer re-projects
masked weights to zero after every step so the blind-spot structure can
never drift.

Heavy lifting is delegated to BLAS matmuls with a fixed accumulation
order, so results are reproducible bit for bit on a given machine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Above this many elements the im2col buffer would thrash memory, so
# conv2d falls back to per-tap accumulation.
_IM2COL_BUDGET = 32 * 1024 * 1024


def check_tensor4(x, name="input"):
    """Validate an array as a (batch, channels, height, width) tensor."""
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValueError(f"{name} must be rank-4 (b, c, h, w), got shape {x.shape}")
    if min(x.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: {x.shape}")
    if x.dtype != np.float64:
        x = x.astype(np.float64)
    return x


def kaiming_uniform(shape, fan_in, rng):
    """Symmetric uniform init with ReLU fan-in scaling."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class ConvParams:
    """Weights of a (possibly masked, possibly dilated) 2-d convolution.

    weight       : (out_ch, in_ch, k, k) float64
    bias         : (out_ch,) float64
    dilation     : spacing between kernel taps
    kernel_mask  : optional (k, k) array of {0.0, 1.0}; zeros mark blind
                   taps whose weights are pinned at exactly 0.0
    """

    weight: np.ndarray
    bias: np.ndarray
    dilation: int = 1
    kernel_mask: np.ndarray | None = None

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ValueError(f"weight must be (out, in, k, k), got {self.weight.shape}")
        if self.k % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {self.k}")
        if self.bias.shape != (self.out_ch,):
            raise ValueError("bias length must equal out_ch")
        if self.dilation < 1:
            raise ValueError("dilation must be >= 1")
        if self.kernel_mask is not None:
            self.kernel_mask = np.asarray(self.kernel_mask, dtype=np.float64)
            if self.kernel_mask.shape != (self.k, self.k):
                raise ValueError("kernel_mask shape must be (k, k)")
            self.project_mask()

    @property
    def out_ch(self):
        return self.weight.shape[0]

    @property
    def in_ch(self):
        return self.weight.shape[1]

    @property
    def k(self):
        return self.weight.shape[2]

    def project_mask(self):
        """Force weights at blind taps back to exactly zero."""
        if self.kernel_mask is not None:
            self.weight *= self.kernel_mask

    def num_params(self):
        return self.weight.size + self.bias.size

    @classmethod
    def create(cls, in_ch, out_ch, k, dilation=1, kernel_mask=None, rng=None):
        """Allocate parameters; Kaiming-uniform if an rng is given, else zeros."""
        if rng is None:
            weight = np.zeros((out_ch, in_ch, k, k))
        else:
            weight = kaiming_uniform((out_ch, in_ch, k, k), in_ch * k * k, rng)
        return cls(weight, np.zeros(out_ch), dilation=dilation, kernel_mask=kernel_mask)

    def reinit(self, rng):
        self.weight[...] = kaiming_uniform(self.weight.shape, self.in_ch * self.k * self.k, rng)
        self.bias[...] = 0.0
        self.project_mask()


def _live_taps(params):
    """Kernel tap coordinates that are not blinded by the mask."""
    k = params.k
    taps = [(r, c) for r in range(k) for c in range(k)]
    if params.kernel_mask is None:
        return taps
    return [(r, c) for r, c in taps if params.kernel_mask[r, c] != 0.0]


def _pad_input(x, params):
    pad = (params.k - 1) // 2 * params.dilation
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d(x, params):
    """Same-size 2-d convolution with zero padding, dilation and masking.

    out(b, o, y, x) = bias[o]
                      + sum_{i, r, c} weight[o, i, r, c] * in(b, i, y + d*(r - k//2), x + d*(c - k//2))

    Taps zeroed by the kernel mask never contribute, and out-of-image taps
    read zeros.
    """
    x = check_tensor4(x)
    if x.shape[1] != params.in_ch:
        raise ValueError(
            f"input has {x.shape[1]} channels, conv expects {params.in_ch}"
        )
    b, _, h, w = x.shape
    d = params.dilation
    taps = _live_taps(params)
    xpad = _pad_input(x, params)
    n = b * h * w

    if len(taps) * params.in_ch * n <= _IM2COL_BUDGET:
        # Gather every live tap into one (in*taps, b*h*w) matrix, then a
        # single matmul against the flattened weights.
        cols = np.empty((len(taps), params.in_ch, n))
        for t, (r, c) in enumerate(taps):
            view = xpad[:, :, r * d : r * d + h, c * d : c * d + w]
            cols[t] = view.transpose(1, 0, 2, 3).reshape(params.in_ch, n)
        wmat = np.empty((params.out_ch, len(taps) * params.in_ch))
        for t, (r, c) in enumerate(taps):
            wmat[:, t * params.in_ch : (t + 1) * params.in_ch] = params.weight[:, :, r, c]
        out = wmat @ cols.reshape(len(taps) * params.in_ch, n)
    else:
        out = np.zeros((params.out_ch, n))
        for r, c in taps:
            view = xpad[:, :, r * d : r * d + h, c * d : c * d + w]
            out += params.weight[:, :, r, c] @ view.transpose(1, 0, 2, 3).reshape(params.in_ch, n)

    out += params.bias[:, None]
    return np.ascontiguousarray(out.reshape(params.out_ch, b, h, w).transpose(1, 0, 2, 3))


def conv2d_backward(grad_out, x, params):
    """Gradients of sum(grad_out * conv2d(x, params)).

    Returns (grad_input, grad_weight, grad_bias).  grad_weight is exactly
    zero at masked taps.
    """
    grad_out = check_tensor4(grad_out, "grad_out")
    x = check_tensor4(x)
    b, _, h, w = x.shape
    if grad_out.shape != (b, params.out_ch, h, w):
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match conv output "
            f"{(b, params.out_ch, h, w)}"
        )
    d = params.dilation
    pad = (params.k - 1) // 2 * d
    taps = _live_taps(params)
    xpad = _pad_input(x, params)
    n = b * h * w

    gmat = np.ascontiguousarray(grad_out.transpose(1, 0, 2, 3)).reshape(params.out_ch, n)
    grad_weight = np.zeros_like(params.weight)
    gpad = np.zeros_like(xpad)
    for r, c in taps:
        view = xpad[:, :, r * d : r * d + h, c * d : c * d + w]
        xmat = view.transpose(1, 0, 2, 3).reshape(params.in_ch, n)
        grad_weight[:, :, r, c] = gmat @ xmat.T
        gslice = (params.weight[:, :, r, c].T @ gmat).reshape(params.in_ch, b, h, w)
        gpad[:, :, r * d : r * d + h, c * d : c * d + w] += gslice.transpose(1, 0, 2, 3)
    if pad:
        grad_input = np.ascontiguousarray(gpad[:, :, pad : pad + h, pad : pad + w])
    else:
        grad_input = gpad
    grad_bias = gmat.sum(axis=1)
    return grad_input, grad_weight, grad_bias


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(grad_out, x):
    """grad_out gated by the positive part of the forward input."""
    if grad_out.shape != x.shape:
        raise ValueError(f"shape mismatch: {grad_out.shape} vs {x.shape}")
    return grad_out * (x > 0.0)


def concat_channels(tensors):
    """Concatenate along the channel axis; batch/height/width must agree."""
    tensors = [check_tensor4(t, f"tensor[{i}]") for i, t in enumerate(tensors)]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise ValueError(f"cannot concat shapes {ref} and {t.shape}")
    return np.concatenate(tensors, axis=1)


def split_channels(x, sizes):
    """Inverse of concat_channels for the given channel sizes."""
    x = check_tensor4(x)
    if sum(sizes) != x.shape[1]:
        raise ValueError(f"split sizes {sizes} do not sum to {x.shape[1]} channels")
    edges = np.cumsum(sizes)[:-1]
    return [np.ascontiguousarray(p) for p in np.split(x, edges, axis=1)]


def add(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def l1_loss_and_grad(pred, target):
    """Mean absolute difference and its (sub)gradient w.r.t. pred."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / diff.size
    return loss, grad


@dataclass
class AdamState:
    """Adam accumulators for an ordered list of parameter arrays."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_step(params, grads, state, masks=None):
    """One in-place Adam update with bias correction.

    ``masks`` is an optional list parallel to ``params``; a non-None entry
    is a broadcastable {0,1} multiplier re-applied after the update so
    blind taps stay exactly zero regardless of accumulator content.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must have matching lengths")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"param {i}: grad shape {g.shape} != param shape {p.shape}")
        state.m[i] *= state.beta1
        state.m[i] += (1.0 - state.beta1) * g
        state.v[i] *= state.beta2
        state.v[i] += (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if masks is not None and masks[i] is not None:
            p *= masks[i]
    return params

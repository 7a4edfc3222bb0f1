"""Neural building blocks: diffusion convolution, message-passing GRU cell,
filler operator, spatial decoder, and the fusion MLP.

All parameter containers hold :class:`~grin.tensor.Tensor` leaves and expose
``parameters()`` as (name, tensor) pairs so the model module can watch,
optimize, and serialize them uniformly.  Weights initialize uniformly in
``+-1/sqrt(fan_in)`` of their own input width; biases start at zero.
"""

import numpy as np

from .errors import DimensionError, ValidationError
from .graph import TransitionMatrices
from .tensor import Tensor, concat_last, matmul, sigmoid, spmm, tanh

__all__ = [
    "DiffusionConvParams",
    "MPGRUCellParams",
    "SpatialDecoderParams",
    "FusionMLPParams",
    "diffusion_conv",
    "mpgru_step",
    "filler",
    "spatial_decode_step",
    "fusion",
]


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape))


class DiffusionConvParams:
    """Weights for a K-hop diffusion convolution.

    One matrix per hop and direction plus a shared hop-0 matrix applied once,
    and a bias on the output.
    """

    def __init__(self, c_in, c_out, max_hops, rng):
        self.c_in = c_in
        self.c_out = c_out
        self.max_hops = max_hops
        self.theta0 = _uniform(rng, c_in, (c_in, c_out))
        self.theta_fwd = [_uniform(rng, c_in, (c_in, c_out)) for _ in range(max_hops)]
        self.theta_bwd = [_uniform(rng, c_in, (c_in, c_out)) for _ in range(max_hops)]
        self.bias = Tensor(np.zeros(c_out))

    def parameters(self, prefix=""):
        out = [(prefix + "theta0", self.theta0), (prefix + "bias", self.bias)]
        for k in range(self.max_hops):
            out.append((f"{prefix}theta_fwd{k + 1}", self.theta_fwd[k]))
            out.append((f"{prefix}theta_bwd{k + 1}", self.theta_bwd[k]))
        return out


def diffusion_conv(x: Tensor, tm: TransitionMatrices, p: DiffusionConvParams) -> Tensor:
    """K-hop diffusion convolution over the node axis.

    ``y = x theta0 + sum_k (T_f^k x) theta_fwd_k + (T_b^k x) theta_bwd_k + bias``.
    """
    if x.shape[-1] != p.c_in:
        raise DimensionError(
            f"diffusion_conv expects input width {p.c_in}, got {x.shape[-1]}"
        )
    if tm.max_hops < p.max_hops:
        raise DimensionError(
            f"transition matrices support {tm.max_hops} hops, parameters need {p.max_hops}"
        )
    y = matmul(x, p.theta0)
    zf = x
    zb = x
    for k in range(p.max_hops):
        zf = spmm(tm.forward, zf)
        zb = spmm(tm.backward, zb)
        y = y + matmul(zf, p.theta_fwd[k])
        y = y + matmul(zb, p.theta_bwd[k])
    return y + p.bias


class MPGRUCellParams:
    """Gate parameters of the message-passing GRU.

    Each gate is a diffusion convolution over the concatenation
    ``[input values | mask | hidden]`` of width ``2 d + l``.
    """

    def __init__(self, n_features, hidden, max_hops, rng):
        self.n_features = n_features
        self.hidden = hidden
        c_in = 2 * n_features + hidden
        self.reset = DiffusionConvParams(c_in, hidden, max_hops, rng)
        self.update = DiffusionConvParams(c_in, hidden, max_hops, rng)
        self.candidate = DiffusionConvParams(c_in, hidden, max_hops, rng)

    def parameters(self, prefix=""):
        return (
            self.reset.parameters(prefix + "reset.")
            + self.update.parameters(prefix + "update.")
            + self.candidate.parameters(prefix + "candidate.")
        )


def mpgru_step(x2: Tensor, m: Tensor, h_prev: Tensor, tm: TransitionMatrices,
               p: MPGRUCellParams) -> Tensor:
    """One recurrent update: gated combination of ``h_prev`` and a candidate
    state, all three gates computed by diffusion convolutions."""
    zi = concat_last([x2, m, h_prev])
    r = sigmoid(diffusion_conv(zi, tm, p.reset))
    u = sigmoid(diffusion_conv(zi, tm, p.update))
    zc = concat_last([x2, m, r * h_prev])
    c = tanh(diffusion_conv(zc, tm, p.candidate))
    return u * h_prev + (1.0 - u) * c


def filler(x: Tensor, m, y: Tensor) -> Tensor:
    """Replace the masked-out entries of ``x`` with the values of ``y``.

    ``m`` is a binary array: 1 keeps ``x``, 0 takes ``y``.  Gradient flows to
    ``x`` only where ``m = 1`` and to ``y`` only where ``m = 0``.
    """
    mask = m.data if isinstance(m, Tensor) else np.asarray(m, dtype=np.float64)
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise ValidationError("filler mask must be binary")
    if mask.shape != x.shape or x.shape != y.shape:
        raise DimensionError(
            f"filler shapes disagree: x {x.shape}, m {mask.shape}, y {y.shape}"
        )
    keep = Tensor(mask)
    take = Tensor(1.0 - mask)
    return x * keep + y * take


class SpatialDecoderParams:
    """First readout, one-layer message passing, and second readout.

    The message function has separate weights per propagation direction; the
    update function is an affine map of ``[hidden | aggregated message]``
    squashed by tanh, so decoder states stay bounded.
    """

    def __init__(self, n_features, hidden, rng, state_width=None):
        d, l = n_features, hidden
        ls = l if state_width is None else state_width
        self.n_features = d
        self.hidden = l
        self.state_width = ls
        self.readout1_w = _uniform(rng, l, (l, d))
        self.readout1_b = Tensor(np.zeros(d))
        msg_in = d + l + d
        self.msg_fwd_w = _uniform(rng, msg_in, (msg_in, ls))
        self.msg_fwd_b = Tensor(np.zeros(ls))
        self.msg_bwd_w = _uniform(rng, msg_in, (msg_in, ls))
        self.msg_bwd_b = Tensor(np.zeros(ls))
        self.update_w = _uniform(rng, l + ls, (l + ls, ls))
        self.update_b = Tensor(np.zeros(ls))
        self.readout2_w = _uniform(rng, ls + l, (ls + l, d))
        self.readout2_b = Tensor(np.zeros(d))

    def parameters(self, prefix=""):
        names = [
            "readout1_w", "readout1_b", "msg_fwd_w", "msg_fwd_b",
            "msg_bwd_w", "msg_bwd_b", "update_w", "update_b",
            "readout2_w", "readout2_b",
        ]
        return [(prefix + n, getattr(self, n)) for n in names]

    def first_readout(self, h: Tensor) -> Tensor:
        """One-step-ahead prediction from the previous hidden state."""
        return matmul(h, self.readout1_w) + self.readout1_b


def spatial_decode_step(x1_filled: Tensor, m, h_prev: Tensor,
                        tm: TransitionMatrices, p: SpatialDecoderParams):
    """Refine first-stage imputations using one hop of neighbor messages.

    Returns ``(s, y2)``: the imputation representation and the second-stage
    predictions.  Messages are aggregated over the one-hop neighborhood only;
    since the graph carries no self-loops, ``s`` at a node is independent of
    that node's own inputs at this step.
    """
    mask = m if isinstance(m, Tensor) else Tensor(np.asarray(m, dtype=np.float64))
    z = concat_last([x1_filled, h_prev, mask])
    agg = spmm(tm.forward, matmul(z, p.msg_fwd_w) + p.msg_fwd_b)
    agg = agg + spmm(tm.backward, matmul(z, p.msg_bwd_w) + p.msg_bwd_b)
    s = tanh(matmul(concat_last([h_prev, agg]), p.update_w) + p.update_b)
    y2 = matmul(concat_last([s, h_prev]), p.readout2_w) + p.readout2_b
    return s, y2


class FusionMLPParams:
    """Feed-forward fusion of the two directional modules.

    The first layer is stored as one weight block per input slot so variants
    that fuse hidden states only can simply omit the decoder-state blocks.
    Applied independently per node and per time step.
    """

    def __init__(self, n_features, hidden, mlp_hidden, rng,
                 state_width=None, with_decoder_states=True):
        l = hidden
        ls = l if state_width is None else state_width
        self.n_features = n_features
        self.mlp_hidden = mlp_hidden
        self.with_decoder_states = with_decoder_states
        fan_in = 2 * (ls + l) if with_decoder_states else 2 * l
        if with_decoder_states:
            self.w_s_fwd = _uniform(rng, fan_in, (ls, mlp_hidden))
            self.w_s_bwd = _uniform(rng, fan_in, (ls, mlp_hidden))
        else:
            self.w_s_fwd = None
            self.w_s_bwd = None
        self.w_h_fwd = _uniform(rng, fan_in, (l, mlp_hidden))
        self.w_h_bwd = _uniform(rng, fan_in, (l, mlp_hidden))
        self.b1 = Tensor(np.zeros(mlp_hidden))
        self.w_out = _uniform(rng, mlp_hidden, (mlp_hidden, n_features))
        self.b_out = Tensor(np.zeros(n_features))

    def parameters(self, prefix=""):
        out = []
        if self.with_decoder_states:
            out += [(prefix + "w_s_fwd", self.w_s_fwd), (prefix + "w_s_bwd", self.w_s_bwd)]
        out += [
            (prefix + "w_h_fwd", self.w_h_fwd),
            (prefix + "w_h_bwd", self.w_h_bwd),
            (prefix + "b1", self.b1),
            (prefix + "w_out", self.w_out),
            (prefix + "b_out", self.b_out),
        ]
        return out


def fusion(s_fwd, h_fwd, s_bwd, h_bwd, p: FusionMLPParams) -> Tensor:
    """Final per-node imputation from the directional representations.

    Decoder-state inputs are required exactly when the parameters carry
    decoder-state blocks.
    """
    if p.with_decoder_states and (s_fwd is None or s_bwd is None):
        raise DimensionError("fusion parameters expect decoder states")
    if not p.with_decoder_states and (s_fwd is not None or s_bwd is not None):
        raise DimensionError("fusion parameters take hidden states only")
    pre = matmul(h_fwd, p.w_h_fwd)
    if p.with_decoder_states:
        pre = matmul(s_fwd, p.w_s_fwd) + pre + matmul(s_bwd, p.w_s_bwd)
    pre = pre + matmul(h_bwd, p.w_h_bwd)
    hidden = tanh(pre + p.b1)
    return matmul(hidden, p.w_out) + p.b_out

"""One directional Mamba2-style selective state-space core.

The core maps a token sequence ``(B, L, d_model)`` to the same shape:

    in_proj -> (z, xBC, dt) -> causal depthwise conv on xBC -> split x/B/C
    -> dt = softplus(dt + dt_bias) -> selective scan -> y * act(z)
    -> rmsnorm -> out_proj

The scan has two interchangeable implementations. ``ssd_scan_naive`` runs
the recurrence one token at a time and serves as the reference;
``ssd_scan_chunked`` evaluates it block-wise, with quadratic intra-chunk
products and a sequential state hand-off between chunks.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .tensor import ShapeError, activation, as_tensor, rmsnorm, softplus


@dataclass(frozen=True)
class Mamba2Config:
    d_model: int = 128
    expand: int = 2
    d_state: int = 128
    headdim: int = 64
    d_conv: int = 4
    chunk: int = 64
    ngroups: int = 1
    activation: str = "gelu"
    norm_eps: float = 1e-5

    def __post_init__(self):
        self.validate()

    @property
    def d_inner(self) -> int:
        return self.expand * self.d_model

    @property
    def nheads(self) -> int:
        return self.d_inner // self.headdim

    @property
    def conv_dim(self) -> int:
        return self.d_inner + 2 * self.ngroups * self.d_state

    @property
    def d_in_proj(self) -> int:
        return self.d_inner + self.conv_dim + self.nheads

    def validate(self) -> None:
        for name in ("d_model", "expand", "d_state", "headdim", "d_conv", "chunk", "ngroups"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_inner % self.headdim:
            raise ValueError(f"d_inner={self.d_inner} is not divisible by headdim={self.headdim}")
        if self.nheads % self.ngroups:
            raise ValueError(f"nheads={self.nheads} is not divisible by ngroups={self.ngroups}")
        activation(self.activation)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Mamba2Config":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Mamba2Weights:
    in_proj: np.ndarray      # (d_model, d_in_proj)
    conv_weight: np.ndarray  # (conv_dim, d_conv)
    conv_bias: np.ndarray    # (conv_dim,)
    dt_bias: np.ndarray      # (nheads,)
    A_log: np.ndarray        # (nheads,)
    D_skip: np.ndarray       # (nheads,)
    norm_gain: np.ndarray    # (d_inner,)
    out_proj: np.ndarray     # (d_inner, d_model)

    @staticmethod
    def shapes(cfg: Mamba2Config) -> dict:
        return {
            "in_proj": (cfg.d_model, cfg.d_in_proj),
            "conv_weight": (cfg.conv_dim, cfg.d_conv),
            "conv_bias": (cfg.conv_dim,),
            "dt_bias": (cfg.nheads,),
            "A_log": (cfg.nheads,),
            "D_skip": (cfg.nheads,),
            "norm_gain": (cfg.d_inner,),
            "out_proj": (cfg.d_inner, cfg.d_model),
        }

    def tensors(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def validate(self, cfg: Mamba2Config) -> None:
        for name, shape in self.shapes(cfg).items():
            actual = tuple(getattr(self, name).shape)
            if actual != shape:
                raise ShapeError(f"{name} has shape {actual}, config requires {shape}")

    @classmethod
    def zeros(cls, cfg: Mamba2Config, dtype=np.float32) -> "Mamba2Weights":
        return cls(**{k: np.zeros(s, dtype=dtype) for k, s in cls.shapes(cfg).items()})

    def astype(self, dtype) -> "Mamba2Weights":
        return Mamba2Weights(**{k: v.astype(dtype, copy=False) for k, v in self.tensors().items()})


def _scan_inputs(x, dt, A, Bmat, Cmat, D_skip):
    x = as_tensor(x)
    dtype = x.dtype
    dt, Bmat, Cmat = (as_tensor(a, dtype=dtype) for a in (dt, Bmat, Cmat))
    A = np.asarray(A, dtype=dtype).reshape(-1)
    D_skip = np.asarray(D_skip, dtype=dtype).reshape(-1)
    if x.ndim != 4:
        raise ShapeError(f"x must be (B, L, H, P), got {x.shape}")
    b, L, H, _ = x.shape
    if dt.shape != (b, L, H):
        raise ShapeError(f"dt must be {(b, L, H)}, got {dt.shape}")
    if Bmat.ndim != 4 or Bmat.shape[:2] != (b, L) or Cmat.shape != Bmat.shape:
        raise ShapeError(f"B and C must both be (B, L, G, N) with (B, L) = {(b, L)}, got {Bmat.shape} and {Cmat.shape}")
    G = Bmat.shape[2]
    if H % G:
        raise ShapeError(f"{H} heads cannot be split across {G} groups")
    if A.shape != (H,) or D_skip.shape != (H,):
        raise ShapeError(f"A and D_skip need one value per head ({H}), got {A.shape} and {D_skip.shape}")
    group_of_head = np.arange(H) // (H // G)
    # (B, L, H, N): every head sees its group's B and C
    Bh = Bmat[:, :, group_of_head, :]
    Ch = Cmat[:, :, group_of_head, :]
    return x, dt, A, Bh, Ch, D_skip


def ssd_scan_naive(x, dt, A, Bmat, Cmat, D_skip) -> np.ndarray:
    """Token-by-token selective scan; the reference the chunked path is tested against.

    Per batch and head, starting from a zero state::

        a_t = exp(dt_t * A)
        h_t = a_t * h_{t-1} + dt_t * outer(x_t, B_t)
        y_t = h_t @ C_t + D * x_t
    """
    x, dt, A, Bh, Ch, D_skip = _scan_inputs(x, dt, A, Bmat, Cmat, D_skip)
    b, L, H, P = x.shape
    N = Bh.shape[-1]
    h = np.zeros((b, H, P, N), dtype=x.dtype)
    y = np.empty_like(x)
    for t in range(L):
        decay = np.exp(dt[:, t] * A)
        inp = (dt[:, t, :, None] * x[:, t])[..., None] * Bh[:, t, :, None, :]
        h = decay[:, :, None, None] * h + inp
        y[:, t] = np.einsum("bhpn,bhn->bhp", h, Ch[:, t]) + D_skip[:, None] * x[:, t]
    return y


def ssd_scan_chunked(x, dt, A, Bmat, Cmat, D_skip, chunk: int = 64) -> np.ndarray:
    """Block-wise selective scan, equal to :func:`ssd_scan_naive` up to rounding.

    ``L`` must be a multiple of ``chunk``.
    """
    x, dt, A, Bh, Ch, D_skip = _scan_inputs(x, dt, A, Bmat, Cmat, D_skip)
    b, L, H, P = x.shape
    N = Bh.shape[-1]
    if chunk < 1 or L % chunk:
        raise ShapeError(f"sequence length {L} is not a multiple of chunk {chunk}")
    nc, Q = L // chunk, chunk

    # head-major chunked layouts: (B, H, nc, Q, ...)
    xdt = (x * dt[..., None]).reshape(b, nc, Q, H, P).transpose(0, 3, 1, 2, 4)
    Bc = Bh.reshape(b, nc, Q, H, N).transpose(0, 3, 1, 2, 4)
    Cc = Ch.reshape(b, nc, Q, H, N).transpose(0, 3, 1, 2, 4)
    cs = np.cumsum((dt * A).reshape(b, nc, Q, H).transpose(0, 3, 1, 2), axis=-1)

    # intra-chunk: decay from source s to target l is exp(cs[l] - cs[s]) for s <= l
    causal = np.tri(Q, dtype=bool)
    seg = np.where(causal, cs[..., :, None] - cs[..., None, :], 0)
    decay = np.where(causal, np.exp(seg), 0).astype(x.dtype, copy=False)
    scores = np.matmul(Cc, Bc.swapaxes(-1, -2)) * decay
    y = np.matmul(scores, xdt)

    # state contributed by each chunk, measured at its last token: (B, H, nc, N, P)
    to_end = np.exp(cs[..., -1:] - cs)
    chunk_states = np.matmul((Bc * to_end[..., None]).swapaxes(-1, -2), xdt)

    # sequential hand-off of state between chunks
    chunk_decay = np.exp(cs[..., -1])
    carried = np.empty_like(chunk_states)
    state = np.zeros((b, H, N, P), dtype=x.dtype)
    for c in range(nc):
        carried[:, :, c] = state
        state = chunk_decay[:, :, c, None, None] * state + chunk_states[:, :, c]

    y += np.matmul(Cc, carried) * np.exp(cs)[..., None]
    y = y.transpose(0, 2, 3, 1, 4).reshape(b, L, H, P)
    return np.ascontiguousarray(y + D_skip[:, None] * x)


SCANS = {"naive": ssd_scan_naive, "chunked": ssd_scan_chunked}


def causal_conv(x, weight, bias, d_conv: int | None = None, act: str | None = "gelu") -> np.ndarray:
    """Depthwise causal conv over the token axis of ``(B, L, C)``, then ``act``.

    ``weight`` is ``(C, d_conv)``; its last tap multiplies the current token.
    """
    x = as_tensor(x)
    weight = as_tensor(weight, dtype=x.dtype)
    bias = as_tensor(bias, dtype=x.dtype)
    if d_conv is None:
        d_conv = weight.shape[-1]
    if x.ndim != 3:
        raise ShapeError(f"causal_conv expects (B, L, C), got {x.shape}")
    C = x.shape[-1]
    if weight.shape != (C, d_conv) or bias.shape != (C,):
        raise ShapeError(f"weight {weight.shape} / bias {bias.shape} do not match C={C}, d_conv={d_conv}")
    L = x.shape[1]
    xp = np.pad(x, ((0, 0), (d_conv - 1, 0), (0, 0)))
    y = np.broadcast_to(bias, x.shape).copy()
    for j in range(d_conv):
        y += xp[:, j:j + L, :] * weight[:, j]
    return activation(act)(y) if act else y


def mamba2_forward(x, w: Mamba2Weights, cfg: Mamba2Config, scan: str = "chunked") -> np.ndarray:
    """Run one directional core on ``(B, L, d_model)`` tokens."""
    x = as_tensor(x)
    if x.ndim != 3 or x.shape[-1] != cfg.d_model:
        raise ShapeError(f"expected (B, L, {cfg.d_model}), got {x.shape}")
    w.validate(cfg)
    w = w.astype(x.dtype)
    b, L, _ = x.shape
    if L % cfg.chunk:
        raise ShapeError(f"token count {L} is not a multiple of chunk {cfg.chunk}")
    act = activation(cfg.activation)
    H, P, G, N = cfg.nheads, cfg.headdim, cfg.ngroups, cfg.d_state

    zxbcdt = np.matmul(x, w.in_proj)
    z, xBC, dt = np.split(zxbcdt, [cfg.d_inner, cfg.d_inner + cfg.conv_dim], axis=-1)
    xBC = causal_conv(xBC, w.conv_weight, w.conv_bias, cfg.d_conv, cfg.activation)
    xs, Bm, Cm = np.split(xBC, [cfg.d_inner, cfg.d_inner + G * N], axis=-1)
    dt = softplus(dt + w.dt_bias)
    A = -np.exp(w.A_log)

    args = (xs.reshape(b, L, H, P), dt, A, Bm.reshape(b, L, G, N), Cm.reshape(b, L, G, N), w.D_skip)
    if scan == "chunked":
        y = ssd_scan_chunked(*args, chunk=cfg.chunk)
    elif scan == "naive":
        y = ssd_scan_naive(*args)
    else:
        raise ValueError(f"unknown scan {scan!r}; expected one of {sorted(SCANS)}")
    y = y.reshape(b, L, cfg.d_inner) * act(z)
    y = rmsnorm(y, w.norm_gain, cfg.norm_eps)
    return np.ascontiguousarray(np.matmul(y, w.out_proj))

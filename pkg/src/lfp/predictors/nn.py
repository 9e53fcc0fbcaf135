"""Small conv-recurrent next-frame network with hand-written backprop.

Layout (arrays are NHWC; all parameters live in one flat float64 vector,
in this order):

    enc1.w  (3, 3, 3, 8)     3x3 conv, stride 2, pad 1, ReLU      (kh, kw, cin, cout)
    enc1.b  (8,)
    enc2.w  (3, 3, 8, 16)    3x3 conv, stride 2, pad 1, ReLU
    enc2.b  (16,)
    rnn.wx  (F, 256)         h_t = tanh(f_t wx + h_{t-1} wh + b),  F = 16 * H/4 * W/4
    rnn.wh  (256, 256)
    rnn.b   (256,)
    proj.w  (256, F)         dense, tanh, reshaped to (H/4, W/4, 16)
    proj.b  (F,)
    dec1.w  (16, 3, 3, 8)    3x3 transposed conv, stride 2, tanh  (cin, kh, kw, cout)
    dec1.b  (8,)
    dec2.w  (8, 3, 3, 3)     3x3 transposed conv, stride 2, sigmoid
    dec2.b  (3,)

The transposed convolutions are exact adjoints of the stride-2 / pad-1
convolutions, so each doubles height and width. Everything downstream of the
encoder is smooth, so finite-difference checks of the recurrent and decoder
weights are not disturbed by ReLU kinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

K = 3
STRIDE = 2
PAD = 1
HIDDEN = 256
C1, C2 = 8, 16


@dataclass(frozen=True)
class Architecture:
    height: int = 36
    width: int = 60
    hidden: int = HIDDEN

    def __post_init__(self):
        if self.height % 4 or self.width % 4:
            raise ValueError("frame height and width must be multiples of 4")

    @property
    def feat_shape(self) -> tuple[int, int, int]:
        return self.height // 4, self.width // 4, C2

    @property
    def feat_size(self) -> int:
        h, w, c = self.feat_shape
        return h * w * c

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        F, H = self.feat_size, self.hidden
        return [
            ("enc1.w", (K, K, 3, C1)), ("enc1.b", (C1,)),
            ("enc2.w", (K, K, C1, C2)), ("enc2.b", (C2,)),
            ("rnn.wx", (F, H)), ("rnn.wh", (H, H)), ("rnn.b", (H,)),
            ("proj.w", (H, F)), ("proj.b", (F,)),
            ("dec1.w", (C2, K, K, C1)), ("dec1.b", (C1,)),
            ("dec2.w", (C1, K, K, 3)), ("dec2.b", (3,)),
        ]

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.shapes())

    def describe(self) -> str:
        body = ";".join(f"{n}:{'x'.join(map(str, s))}" for n, s in self.shapes())
        return f"convrnn-v1;{self.height}x{self.width};{body}"


def unflatten(arch: Architecture, flat: np.ndarray) -> dict[str, np.ndarray]:
    """Named views into ``flat`` (writes through)."""
    out, i = {}, 0
    for name, shape in arch.shapes():
        n = int(np.prod(shape))
        out[name] = flat[i : i + n].reshape(shape)
        i += n
    return out


def init_params(arch: Architecture, rng: np.random.Generator) -> np.ndarray:
    flat = np.zeros(arch.n_params)
    p = unflatten(arch, flat)
    F, H = arch.feat_size, arch.hidden
    p["enc1.w"][:] = rng.normal(0, np.sqrt(2 / (K * K * 3)), p["enc1.w"].shape)
    p["enc2.w"][:] = rng.normal(0, np.sqrt(2 / (K * K * C1)), p["enc2.w"].shape)
    p["rnn.wx"][:] = rng.normal(0, np.sqrt(1 / F), p["rnn.wx"].shape)
    p["rnn.wh"][:] = rng.normal(0, 0.5 * np.sqrt(1 / H), p["rnn.wh"].shape)
    p["proj.w"][:] = rng.normal(0, np.sqrt(1 / H), p["proj.w"].shape)
    # a stride-2 transposed conv sums over ~K*K/4 inputs per output
    p["dec1.w"][:] = rng.normal(0, np.sqrt(1 / (C2 * K * K / 4)), p["dec1.w"].shape)
    p["dec2.w"][:] = rng.normal(0, np.sqrt(1 / (C1 * K * K / 4)), p["dec2.w"].shape)
    return flat


# ------------------------------------------------------------ conv helpers

def _patches(x: np.ndarray) -> np.ndarray:
    """(N, H, W, C) -> (N*Ho*Wo, K*K*C) patch matrix for a 3x3/s2/p1 conv."""
    n, h, w, c = x.shape
    ho, wo = (h + 2 * PAD - K) // STRIDE + 1, (w + 2 * PAD - K) // STRIDE + 1
    xp = np.pad(x, ((0, 0), (PAD, PAD), (PAD, PAD), (0, 0)))
    sn, sh, sw, sc = xp.strides
    view = as_strided(xp, (n, ho, wo, K, K, c), (sn, STRIDE * sh, STRIDE * sw, sh, sw, sc))
    return view.reshape(n * ho * wo, K * K * c)


def _fold(cols: np.ndarray, n: int, h: int, w: int, c: int) -> np.ndarray:
    """Adjoint of :func:`_patches`: scatter-add patch rows back onto (N, H, W, C)."""
    ho, wo = (h + 2 * PAD - K) // STRIDE + 1, (w + 2 * PAD - K) // STRIDE + 1
    cols = cols.reshape(n, ho, wo, K, K, c)
    xp = np.zeros((n, h + 2 * PAD, w + 2 * PAD, c), dtype=cols.dtype)
    for i in range(K):
        for j in range(K):
            xp[:, i : i + STRIDE * ho : STRIDE, j : j + STRIDE * wo : STRIDE, :] += cols[:, :, :, i, j, :]
    return xp[:, PAD : PAD + h, PAD : PAD + w, :]


def conv_forward(x, w, b):
    n, h, wd, _ = x.shape
    cols = _patches(x)
    out = cols @ w.reshape(-1, w.shape[-1]) + b
    return out.reshape(n, (h + 1) // 2, (wd + 1) // 2, -1), cols


def conv_backward(dout, x_shape, cols, w, need_dx=True):
    n, h, wd, c = x_shape
    d = dout.reshape(-1, dout.shape[-1])
    dw = (cols.T @ d).reshape(w.shape)
    db = d.sum(axis=0)
    dx = _fold(d @ w.reshape(-1, w.shape[-1]).T, n, h, wd, c) if need_dx else None
    return dx, dw, db


def deconv_forward(x, w, b):
    """Transposed conv: (N, H, W, Cin) -> (N, 2H, 2W, Cout)."""
    n, h, wd, cin = x.shape
    cout = w.shape[-1]
    cols = x.reshape(-1, cin) @ w.reshape(cin, -1)
    return _fold(cols, n, 2 * h, 2 * wd, cout) + b


def deconv_backward(dout, x, w):
    n, h, wd, cin = x.shape
    d = _patches(dout)  # (N*H*W, K*K*Cout)
    xf = x.reshape(-1, cin)
    dw = (xf.T @ d).reshape(w.shape)
    db = dout.sum(axis=(0, 1, 2))
    dx = (d @ w.reshape(cin, -1).T).reshape(x.shape)
    return dx, dw, db


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# ------------------------------------------------------------ whole network

def forward(arch: Architecture, flat: np.ndarray, x: np.ndarray, keep: bool = False):
    """Run the network on ``x`` of shape (B, T, H, W, 3) in [0, 1].

    Returns predictions of the same shape, where ``[:, t]`` is the predicted
    frame after inputs ``0..t``. With ``keep`` the activations needed by
    :func:`backward` are returned as well.
    """
    p = unflatten(arch, flat)
    bsz, t_len, hgt, wid, _ = x.shape
    n = bsz * t_len
    x0 = x.reshape(n, hgt, wid, 3)
    z1, cols1 = conv_forward(x0, p["enc1.w"], p["enc1.b"])
    a1 = np.maximum(z1, 0)
    z2, cols2 = conv_forward(a1, p["enc2.w"], p["enc2.b"])
    a2 = np.maximum(z2, 0)
    feats = a2.reshape(bsz, t_len, -1)
    # the input projection does not depend on the recurrence
    fx = feats @ p["rnn.wx"] + p["rnn.b"]
    hs = np.empty((bsz, t_len, arch.hidden), dtype=flat.dtype)
    h = np.zeros((bsz, arch.hidden), dtype=flat.dtype)
    for t in range(t_len):
        h = np.tanh(fx[:, t] + h @ p["rnn.wh"])
        hs[:, t] = h
    hf = hs.reshape(n, arch.hidden)
    ap = np.tanh(hf @ p["proj.w"] + p["proj.b"]).reshape(n, *arch.feat_shape)
    ad1 = np.tanh(deconv_forward(ap, p["dec1.w"], p["dec1.b"]))
    zd2 = deconv_forward(ad1, p["dec2.w"], p["dec2.b"])
    y = _sigmoid(zd2).reshape(x.shape)
    if not keep:
        return y
    cache = dict(x0=x0, cols1=cols1, z1=z1, a1=a1, cols2=cols2, z2=z2, feats=feats,
                 hs=hs, ap=ap, ad1=ad1, y=y)
    return y, cache


def step(arch: Architecture, flat: np.ndarray, frame: np.ndarray, h: np.ndarray | None):
    """Advance the recurrence by one (H, W, 3) frame.

    Returns the predicted next frame and the new hidden state; feeding frames
    one at a time reproduces :func:`forward` on the whole sequence.
    """
    p = unflatten(arch, flat)
    z1, _ = conv_forward(frame[None], p["enc1.w"], p["enc1.b"])
    z2, _ = conv_forward(np.maximum(z1, 0), p["enc2.w"], p["enc2.b"])
    pre = np.maximum(z2, 0).reshape(1, -1) @ p["rnn.wx"] + p["rnn.b"]
    if h is not None:
        pre += h @ p["rnn.wh"]
    h = np.tanh(pre)
    ap = np.tanh(h @ p["proj.w"] + p["proj.b"]).reshape(1, *arch.feat_shape)
    ad1 = np.tanh(deconv_forward(ap, p["dec1.w"], p["dec1.b"]))
    y = _sigmoid(deconv_forward(ad1, p["dec2.w"], p["dec2.b"]))
    return y[0], h


def mse(y: np.ndarray, target: np.ndarray) -> float:
    d = y - target
    return float(np.mean(d * d))


def backward(arch: Architecture, flat: np.ndarray, cache: dict, target: np.ndarray,
             out: np.ndarray | None = None) -> np.ndarray:
    """Gradient of ``mse(y, target)`` w.r.t. the flat parameter vector.

    Every entry of ``out`` is overwritten, so a buffer can be reused.
    """
    p = unflatten(arch, flat)
    grad = np.empty_like(flat) if out is None else out
    g = unflatten(arch, grad)
    y = cache["y"]
    bsz, t_len = y.shape[:2]
    n = bsz * t_len
    dy = (2.0 / y.size) * (y - target)
    dzd2 = (dy * y * (1.0 - y)).reshape(n, *y.shape[2:])

    dad1, g["dec2.w"][:], g["dec2.b"][:] = deconv_backward(dzd2, cache["ad1"], p["dec2.w"])
    dzd1 = dad1 * (1.0 - cache["ad1"] ** 2)
    dap, g["dec1.w"][:], g["dec1.b"][:] = deconv_backward(dzd1, cache["ap"], p["dec1.w"])
    dzp = (dap * (1.0 - cache["ap"] ** 2)).reshape(n, -1)
    hs = cache["hs"]
    hf = hs.reshape(n, -1)
    g["proj.w"][:] = hf.T @ dzp
    g["proj.b"][:] = dzp.sum(axis=0)
    dh_out = (dzp @ p["proj.w"].T).reshape(bsz, t_len, -1)

    da = np.empty_like(hs)
    carry = np.zeros((bsz, arch.hidden), dtype=flat.dtype)
    wh_t = p["rnn.wh"].T
    for t in range(t_len - 1, -1, -1):
        da[:, t] = (dh_out[:, t] + carry) * (1.0 - hs[:, t] ** 2)
        carry = da[:, t] @ wh_t
    h_prev = np.concatenate([np.zeros((bsz, 1, arch.hidden), dtype=hs.dtype), hs[:, :-1]], axis=1)
    daf = da.reshape(n, -1)
    g["rnn.wh"][:] = h_prev.reshape(n, -1).T @ daf
    g["rnn.b"][:] = daf.sum(axis=0)
    feats = cache["feats"].reshape(n, -1)
    g["rnn.wx"][:] = feats.T @ daf
    dfeat = (daf @ p["rnn.wx"].T).reshape(cache["z2"].shape)

    dz2 = dfeat * (cache["z2"] > 0)
    da1, g["enc2.w"][:], g["enc2.b"][:] = conv_backward(dz2, cache["a1"].shape, cache["cols2"], p["enc2.w"])
    dz1 = da1 * (cache["z1"] > 0)
    _, g["enc1.w"][:], g["enc1.b"][:] = conv_backward(
        dz1, cache["x0"].shape, cache["cols1"], p["enc1.w"], need_dx=False)
    return grad


def loss_and_grad(arch: Architecture, flat: np.ndarray, x: np.ndarray, target: np.ndarray,
                  out: np.ndarray | None = None):
    y, cache = forward(arch, flat, x, keep=True)
    return mse(y, target), backward(arch, flat, cache, target, out)

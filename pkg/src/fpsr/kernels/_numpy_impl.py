"""Pure-numpy convolution kernels (im2col + BLAS matmul).

Fallback backend used when the compiled extension is unavailable or
explicitly disabled. Inputs arrive already zero-padded. Deterministic:
a fixed input always produces a bit-identical output within this
backend.
"""

import numpy as np

NAME = "numpy"


def _im2col(xp, kh, kw, stride, ho, wo):
    # (N, C, kh, kw, Ho, Wo) strided view, then one contiguous copy
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return view.reshape(n, c * kh * kw, ho * wo)


def conv2d_forward(xp, w, bias, stride):
    n, cin, hp, wp = xp.shape
    cout, _, kh, kw = w.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    out = w.reshape(cout, -1) @ cols  # (N, Cout, Ho*Wo)
    out += bias[:, None]
    return np.ascontiguousarray(out.reshape(n, cout, ho, wo))


def conv2d_grad_input(gout, w, xp_shape, stride):
    n, cin, hp, wp = xp_shape
    cout, _, kh, kw = w.shape
    _, _, ho, wo = gout.shape
    # (N, Cin*kh*kw, Ho*Wo)
    gcols = w.reshape(cout, -1).T @ gout.reshape(n, cout, ho * wo)
    gcols = gcols.reshape(n, cin, kh, kw, ho, wo)
    gxp = np.zeros(xp_shape, dtype=gout.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, i, j]
    return gxp


def conv2d_grad_weight(gout, xp, w_shape, stride):
    cout, cin, kh, kw = w_shape
    n = xp.shape[0]
    _, _, ho, wo = gout.shape
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    # sum over batch of (Cout, Ho*Wo) @ (Ho*Wo, Cin*kh*kw)
    gw = np.einsum("nop,ncp->oc", gout.reshape(n, cout, ho * wo), cols,
                   optimize=True)
    return np.ascontiguousarray(gw.reshape(cout, cin, kh, kw))

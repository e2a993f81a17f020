"""Thin wrapper around the Cython convolution core.

Importing this module raises ImportError when the extension was not
built; the kernels package then falls back to the numpy backend.
Inputs arrive already zero-padded (the autodiff op pads once and shares
the array between forward and both gradients).
"""

import numpy as np

from . import _convkern

NAME = "compiled"


def conv2d_forward(xp, w, bias, stride):
    n, cin, hp, wp = xp.shape
    cout, _, kh, kw = w.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    cols = np.empty((n, cin * kh * kw, ho * wo), dtype=xp.dtype)
    out = np.empty((n, cout, ho, wo), dtype=xp.dtype)
    _convkern.conv2d_forward(np.ascontiguousarray(xp), np.ascontiguousarray(w),
                             bias, stride, cols, out)
    return out


def conv2d_grad_input(gout, w, xp_shape, stride):
    n, cin, hp, wp = xp_shape
    cout, _, kh, kw = w.shape
    _, _, ho, wo = gout.shape
    gcols = np.empty((n, cin * kh * kw, ho * wo), dtype=gout.dtype)
    gxp = np.zeros(xp_shape, dtype=gout.dtype)
    _convkern.conv2d_grad_input(np.ascontiguousarray(gout),
                                np.ascontiguousarray(w), stride, gcols, gxp)
    return gxp


def conv2d_grad_weight(gout, xp, w_shape, stride):
    cout, cin, kh, kw = w_shape
    _, _, ho, wo = gout.shape
    cols = np.empty((cin * kh * kw, ho * wo), dtype=xp.dtype)
    gw = np.empty(w_shape, dtype=xp.dtype)
    _convkern.conv2d_grad_weight(np.ascontiguousarray(gout),
                                 np.ascontiguousarray(xp), stride, cols, gw)
    return gw

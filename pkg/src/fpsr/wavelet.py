"""Single-level 2-D Haar transform pair.

Analysis (`dwt2`) is a fixed, frozen filter bank. Synthesis (`idwt2`)
carries its own kernel tensor which may be trainable; at Haar
initialization the pair reconstructs perfectly:

    per 2x2 block [A, B; C, D]:
        a = A+B+C+D,  b = A+B-C-D,  c = A-B+C-D,  d = A-B-C+D
    and back:
        A = (a+b+c+d)/4, B = (a+b-c-d)/4, C = (a-b+c-d)/4, D = (a-b-c+d)/4

Both directions are registered autodiff primitives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, apply_op, register_external_op
from .errors import ShapeError

# Classical 2x2 Haar filter bank. Applied in convolution (flipped)
# orientation so that the block arithmetic above holds exactly.
HAAR_LL = np.array([[1.0, 1.0], [1.0, 1.0]])
HAAR_LH = np.array([[-1.0, -1.0], [1.0, 1.0]])
HAAR_HL = np.array([[-1.0, 1.0], [-1.0, 1.0]])
HAAR_HH = np.array([[1.0, -1.0], [-1.0, 1.0]])

BAND_NAMES = ("a", "h", "v", "d")


@dataclass
class SubBandSet:
    """The (approximation, horizontal, vertical, diagonal) quadruple."""

    a: Tensor
    h: Tensor
    v: Tensor
    d: Tensor

    def __iter__(self):
        return iter((self.a, self.h, self.v, self.d))

    def __getitem__(self, i):
        return (self.a, self.h, self.v, self.d)[i]

    @property
    def shape(self):
        return self.a.shape


@dataclass
class WaveletFilters:
    """Fixed analysis bank plus a (possibly trainable) synthesis tensor.

    `synthesis` is shaped (4, 2, 2), one placement kernel per band; at
    init it is the flipped analysis bank divided by 4, which makes
    idwt2(dwt2(x)) the identity.
    """

    f_ll: np.ndarray
    f_lh: np.ndarray
    f_hl: np.ndarray
    f_hh: np.ndarray
    learnable: bool
    synthesis: Tensor = field(default=None)

    def analysis_stack(self, dtype):
        """Analysis kernels in convolution orientation, shape (4, 2, 2)."""
        flipped = [k[::-1, ::-1] for k in (self.f_ll, self.f_lh, self.f_hl, self.f_hh)]
        return np.stack(flipped).astype(dtype)


def init_haar(learnable=False):
    """Haar filter bank; synthesis scaled for exact reconstruction."""
    filters = WaveletFilters(
        f_ll=HAAR_LL.copy(),
        f_lh=HAAR_LH.copy(),
        f_hl=HAAR_HL.copy(),
        f_hh=HAAR_HH.copy(),
        learnable=bool(learnable),
    )
    synth = filters.analysis_stack(np.float32) / 4.0
    filters.synthesis = Tensor(synth, requires_grad=bool(learnable))
    return filters


def dwt2(image, filters):
    """Decompose an even-sided image into its four half-size sub-bands."""
    if image.data.ndim != 4:
        raise ShapeError("dwt2 expects an N x C x H x W tensor")
    n, c, h, w = image.shape
    if h % 2 or w % 2:
        raise ShapeError(f"dwt2 needs even sides, got {h}x{w} (no implicit padding)")
    kern = filters.analysis_stack(image.dtype)  # (4, 2, 2)

    x = image.data
    corners = (x[:, :, 0::2, 0::2], x[:, :, 0::2, 1::2],
               x[:, :, 1::2, 0::2], x[:, :, 1::2, 1::2])
    bands = []
    for b in range(4):
        acc = np.zeros((n, c, h // 2, w // 2), dtype=image.dtype)
        for idx, corner in enumerate(corners):
            acc += kern[b, idx // 2, idx % 2] * corner
        bands.append(acc)

    def make_bwd(b):
        def bwd(g):
            gx = np.zeros((n, c, h, w), dtype=g.dtype)
            for idx in range(4):
                gx[:, :, idx // 2::2, idx % 2::2] = kern[b, idx // 2, idx % 2] * g
            return [gx]
        return bwd

    outs = [apply_op("dwt2", [image], bands[b], make_bwd(b)) for b in range(4)]
    return SubBandSet(*outs)


def idwt2(bands, filters):
    """Recompose four sub-bands into a full-size image.

    Differentiable with respect to the bands and, when the filters are
    learnable, the synthesis kernels.
    """
    shapes = {tuple(t.shape) for t in bands}
    if len(shapes) != 1:
        raise ShapeError(f"idwt2: sub-band shapes differ: {sorted(shapes)}")
    n, c, hh, hw = bands.a.shape
    synth = filters.synthesis
    band_list = list(bands)
    band_data = [t.data for t in band_list]
    sv = synth.data.astype(bands.a.dtype)

    out = np.zeros((n, c, hh * 2, hw * 2), dtype=bands.a.dtype)
    for b in range(4):
        for di in range(2):
            for dj in range(2):
                out[:, :, di::2, dj::2] += sv[b, di, dj] * band_data[b]

    def bwd(g):
        grads = []
        for b in range(4):
            if band_list[b].requires_grad:
                gb = np.zeros((n, c, hh, hw), dtype=g.dtype)
                for di in range(2):
                    for dj in range(2):
                        gb += sv[b, di, dj] * g[:, :, di::2, dj::2]
                grads.append(gb)
            else:
                grads.append(None)
        if synth.requires_grad:
            gs = np.zeros_like(synth.data)
            for b in range(4):
                for di in range(2):
                    for dj in range(2):
                        gs[b, di, dj] = (g[:, :, di::2, dj::2] * band_data[b]).sum()
            grads.append(gs)
        else:
            grads.append(None)
        return grads

    return apply_op("idwt2", band_list + [synth], out, bwd)


register_external_op("dwt2", dwt2)
register_external_op("idwt2", idwt2)

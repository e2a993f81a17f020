"""Sub-band generators, discriminators and the attention gate.

Four generator/discriminator pairs share one architecture but never
share parameters. The attention gate assigns one multiplicative weight
per generated sub-band (softmax over four logits, scaled by 4 so the
weights always sum to 4 and start as the identity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .wavelet import SubBandSet, dwt2, idwt2, init_haar

LRELU_SLOPE = 0.2


# ---------------------------------------------------------------------------
# module plumbing


class Module:
    """Minimal container tracking parameters, buffers and children.

    Registration order is attribute-assignment order, which makes
    `named_parameters()` stable across runs and checkpoints.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor):
            (self._params if value.requires_grad else self._buffers)[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def named_buffers(self, prefix=""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, child in self._children.items():
            yield from child.named_buffers(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def freeze(self):
        # flips only the flag; registration (and checkpoints) are unaffected
        for p in self.parameters():
            p.requires_grad = False

    def unfreeze(self):
        for p in self.parameters():
            p.requires_grad = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, mods):
        super().__init__()
        self.mods = list(mods)
        for i, m in enumerate(self.mods):
            self._children[str(i)] = m

    def __iter__(self):
        return iter(self.mods)

    def __getitem__(self, i):
        return self.mods[i]

    def __len__(self):
        return len(self.mods)


def _kaiming(rng, shape, fan_in, gain_scale=1.0):
    # He init for leaky-relu fan-in; gain_scale damps residual branches
    std = gain_scale * math.sqrt(2.0 / ((1.0 + LRELU_SLOPE ** 2) * fan_in))
    return (rng.standard_normal(shape) * std).astype(np.float32)


class Conv2d(Module):
    def __init__(self, rng, cin, cout, k=3, stride=1, padding=1, init_scale=1.0):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.weight = Tensor(_kaiming(rng, (cout, cin, k, k), cin * k * k, init_scale),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True)

    def forward(self, x):
        return ad.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Dense(Module):
    def __init__(self, rng, fin, fout):
        super().__init__()
        self.weight = Tensor(_kaiming(rng, (fout, fin), fin), requires_grad=True)
        self.bias = Tensor(np.zeros(fout, dtype=np.float32), requires_grad=True)

    def forward(self, x):
        return ad.dense(x, self.weight, self.bias)


class InstanceNorm(Module):
    def __init__(self, channels):
        super().__init__()
        self.gamma = Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)

    def forward(self, x):
        return ad.instance_norm(x, self.gamma, self.beta)


# ---------------------------------------------------------------------------
# configs


@dataclass
class GeneratorConfig:
    num_rrdb: int = 4
    base_channels: int = 32
    growth_channels: int = 16
    scale_factor: int = 2
    residual_scale: float = 0.2

    def validate(self):
        if self.scale_factor not in (2, 4, 8):
            raise ConfigError(f"scale_factor must be 2, 4 or 8, got {self.scale_factor}")
        if self.num_rrdb < 1:
            raise ConfigError(f"num_rrdb must be >= 1, got {self.num_rrdb}")
        return self


@dataclass
class DiscriminatorConfig:
    num_conv: int = 10
    fc_sizes: tuple = (100, 1)
    use_instance_norm: bool = True
    base_channels: int = 32

    def validate(self):
        if self.num_conv < 2:
            raise ConfigError(f"num_conv must be >= 2, got {self.num_conv}")
        if len(self.fc_sizes) != 2 or self.fc_sizes[1] != 1:
            raise ConfigError(f"fc_sizes must be (hidden, 1), got {self.fc_sizes}")
        return self


@dataclass
class ModelConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    hr_band_size: int = 32  # side of the HR sub-bands seen by the discriminators
    use_attention: bool = True
    learnable_idwt: bool = True

    def validate(self):
        self.generator.validate()
        self.discriminator.validate()
        return self


# ---------------------------------------------------------------------------
# generator


class DenseBlock(Module):
    """Five 3x3 convs with dense concatenation and a scaled residual."""

    def __init__(self, rng, channels, growth, residual_scale):
        super().__init__()
        self.residual_scale = residual_scale
        convs = []
        for i in range(4):
            convs.append(Conv2d(rng, channels + i * growth, growth, init_scale=0.1))
        convs.append(Conv2d(rng, channels + 4 * growth, channels, init_scale=0.1))
        self.convs = ModuleList(convs)

    def forward(self, x):
        feats = [x]
        for conv in self.convs[:-1]:
            inp = feats[0] if len(feats) == 1 else ad.concat(feats, axis=1)
            feats.append(ad.leaky_relu(conv(inp), LRELU_SLOPE))
        out = self.convs[-1](ad.concat(feats, axis=1))
        return ad.add(x, ad.scale(out, self.residual_scale))


class RRDB(Module):
    """Residual-in-residual stack of three dense blocks."""

    def __init__(self, rng, channels, growth, residual_scale):
        super().__init__()
        self.residual_scale = residual_scale
        self.db1 = DenseBlock(rng, channels, growth, residual_scale)
        self.db2 = DenseBlock(rng, channels, growth, residual_scale)
        self.db3 = DenseBlock(rng, channels, growth, residual_scale)

    def forward(self, x):
        out = self.db3(self.db2(self.db1(x)))
        return ad.add(x, ad.scale(out, self.residual_scale))


class Generator(Module):
    """One sub-band super-resolver.

    conv -> RRDB trunk -> trunk conv -> global residual -> per-stage
    (nearest upsample x2, conv, lrelu) -> final conv. The output layer
    is linear: sub-band values are signed and unbounded.
    """

    def __init__(self, rng, cfg: GeneratorConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        c, g = cfg.base_channels, cfg.growth_channels
        self.first = Conv2d(rng, 1, c)
        self.blocks = ModuleList(
            [RRDB(rng, c, g, cfg.residual_scale) for _ in range(cfg.num_rrdb)])
        self.trunk = Conv2d(rng, c, c)
        self.upconvs = ModuleList(
            [Conv2d(rng, c, c) for _ in range(int(math.log2(cfg.scale_factor)))])
        self.final = Conv2d(rng, c, 1)

    def forward(self, x):
        fea = self.first(x)
        out = fea
        for block in self.blocks:
            out = block(out)
        out = ad.add(fea, self.trunk(out))
        for up in self.upconvs:
            out = ad.leaky_relu(up(ad.upsample_nearest(out, 2)), LRELU_SLOPE)
        return self.final(out)


# ---------------------------------------------------------------------------
# discriminator


class Discriminator(Module):
    """Conv stack with alternating strides, then two dense layers.

    Channels double every second layer. Instance normalization sits on
    every conv except the first when enabled. Emits raw scores; the
    relativistic pairing applies the sigmoid.
    """

    def __init__(self, rng, cfg: DiscriminatorConfig, input_size):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.input_size = input_size
        n_stride2 = cfg.num_conv // 2
        if input_size < 2 ** n_stride2:
            raise ConfigError(
                f"discriminator input {input_size} smaller than its total "
                f"downsampling factor {2 ** n_stride2}")

        convs, norms = [], []
        side = input_size
        cin = 1
        for i in range(cfg.num_conv):
            cout = cfg.base_channels * (2 ** (i // 2))
            stride = 2 if i % 2 else 1
            convs.append(Conv2d(rng, cin, cout, stride=stride))
            norms.append(InstanceNorm(cout) if (cfg.use_instance_norm and i > 0) else None)
            side = (side + 2 - 3) // stride + 1
            cin = cout
        self.convs = ModuleList(convs)
        self.norms = ModuleList([n for n in norms if n is not None])
        self._norm_slots = [n is not None for n in norms]
        self.flat_dim = cin * side * side
        self.fc1 = Dense(rng, self.flat_dim, cfg.fc_sizes[0])
        self.fc2 = Dense(rng, cfg.fc_sizes[0], cfg.fc_sizes[1])

    def forward(self, x, return_activations=False):
        if x.shape[2] != self.input_size or x.shape[3] != self.input_size:
            raise ShapeError(
                f"discriminator built for {self.input_size}x{self.input_size} "
                f"inputs, got {x.shape[2]}x{x.shape[3]}")
        acts = []
        out = x
        norm_iter = iter(self.norms)
        for i, conv in enumerate(self.convs):
            out = conv(out)
            if self._norm_slots[i]:
                out = next(norm_iter)(out)
            out = ad.leaky_relu(out, LRELU_SLOPE)
            acts.append(out)
        out = ad.reshape(out, (out.shape[0], self.flat_dim))
        out = ad.leaky_relu(self.fc1(out), LRELU_SLOPE)
        out = self.fc2(out)
        if return_activations:
            return out, acts
        return out


# ---------------------------------------------------------------------------
# attention gate


class SubBandAttention(Module):
    """Four trainable logits; weights = 4 * softmax(logits).

    At zero logits every weight is exactly 1, so the gate starts as the
    identity, and the weights always sum to 4.
    """

    def __init__(self):
        super().__init__()
        self.logits = Tensor(np.zeros(4, dtype=np.float32), requires_grad=True)

    def weights(self):
        return ad.scale(ad.softmax_vec(self.logits), 4.0)

    def apply(self, bands: SubBandSet) -> SubBandSet:
        w = self.weights()
        gated = [ad.scale_by(band, ad.pick(w, i)) for i, band in enumerate(bands)]
        return SubBandSet(*gated)


# ---------------------------------------------------------------------------
# full model


class FpGanModel(Module):
    """The four sub-band GAN pairs, gate and wavelet pair, end to end."""

    BAND_LABELS = ("a", "h", "v", "d")

    def __init__(self, cfg: ModelConfig, seed=0):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
        self.generators = ModuleList(
            [Generator(rng, cfg.generator) for _ in range(4)])
        self.discriminators = ModuleList(
            [Discriminator(rng, cfg.discriminator, cfg.hr_band_size) for _ in range(4)])
        self.attention = SubBandAttention()
        self.filters = init_haar(learnable=cfg.learnable_idwt)
        self.idwt_synthesis = self.filters.synthesis  # registers param/buffer

    def forward(self, lr_image):
        """LR image -> (SR image, raw SR bands, gated SR bands)."""
        lr_bands = dwt2(lr_image, self.filters)
        sr_bands = SubBandSet(*[g(b) for g, b in zip(self.generators, lr_bands)])
        if self.cfg.use_attention:
            weighted = self.attention.apply(sr_bands)
        else:
            weighted = sr_bands
        sr = idwt2(weighted, self.filters)
        return sr, sr_bands, weighted

    def generator_parameters(self):
        """Named params updated at the generator learning rate."""
        out = [(f"generators.{i}.{n}", p)
               for i in range(4)
               for n, p in self.generators[i].named_parameters()]
        if self.cfg.use_attention:
            out.extend(("attention." + n, p)
                       for n, p in self.attention.named_parameters())
        return out

    def discriminator_parameters(self):
        return [(f"discriminators.{i}.{n}", p)
                for i in range(4)
                for n, p in self.discriminators[i].named_parameters()]

    def idwt_parameters(self):
        if self.cfg.learnable_idwt:
            return [("idwt_synthesis", self.filters.synthesis)]
        return []

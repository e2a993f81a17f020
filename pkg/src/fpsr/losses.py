"""Training objectives: relativistic adversarial pair, sub-band L1,
Charbonnier pixel penalty, and their weighted totals.

All functions compose autodiff primitives, so a single backward pass on
a total distributes gradients to every contributing parameter. Sub-band
sums always run in the fixed order A, H, V, D.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import autodiff as ad
from .errors import ShapeError

# probabilities are clamped before log so a saturated discriminator
# cannot produce -inf
_P_MIN = 1e-7
_P_MAX = 1.0 - 1e-7


@dataclass
class LossWeights:
    lambda1: float = 0.1
    lambda2: float = 0.1
    lambda3: float = 0.1
    lambda4: float = 0.1
    alpha: float = 1e-4
    beta: float = 0.1
    epsilon: float = 1e-6

    def validate(self):
        vals = (self.lambda1, self.lambda2, self.lambda3, self.lambda4,
                self.alpha, self.beta)
        if any(v < 0 for v in vals):
            raise ShapeError("loss weights must be non-negative")
        if self.epsilon <= 0:
            raise ShapeError("epsilon must be positive")
        return self

    @property
    def lambdas(self):
        return (self.lambda1, self.lambda2, self.lambda3, self.lambda4)


@dataclass
class LossReport:
    """Scalar losses of one training step, plus the gate weights."""

    step: int = 0
    adv_g: list = field(default_factory=lambda: [0.0] * 4)
    adv_d: list = field(default_factory=lambda: [0.0] * 4)
    wavelet: list = field(default_factory=lambda: [0.0] * 4)
    pixel: float = 0.0
    total_g: float = 0.0
    total_d: float = 0.0
    attention_weights: list = field(default_factory=lambda: [1.0] * 4)

    CSV_HEADER = ("step,adv_g_a,adv_g_h,adv_g_v,adv_g_d,"
                  "adv_d_a,adv_d_h,adv_d_v,adv_d_d,"
                  "wavelet_a,wavelet_h,wavelet_v,wavelet_d,"
                  "pixel,total_g,total_d,w_a,w_h,w_v,w_d")

    def csv_row(self):
        vals = ([self.step] + self.adv_g + self.adv_d + self.wavelet
                + [self.pixel, self.total_g, self.total_d] + self.attention_weights)
        return ",".join(f"{v:.9g}" if isinstance(v, float) else str(v) for v in vals)


def _check_scores(score_real, score_fake):
    if score_real.shape != score_fake.shape:
        raise ShapeError(f"score shapes differ: {score_real.shape} vs {score_fake.shape}")
    if score_real.size == 0:
        raise ShapeError("empty score batch")


def relativistic_pair(score_real, score_fake):
    """sigmoid(real - mean(fake)) and sigmoid(fake - mean(real)).

    The relativistic-average pairing: how much more realistic a sample
    looks than the average of the opposite class.
    """
    _check_scores(score_real, score_fake)
    d_rf = ad.sigmoid(ad.shift_by(score_real, ad.scale(ad.mean(score_fake), -1.0)))
    d_fr = ad.sigmoid(ad.shift_by(score_fake, ad.scale(ad.mean(score_real), -1.0)))
    return d_rf, d_fr


def _log_prob(p):
    return ad.log(ad.clamp(p, _P_MIN, _P_MAX))


def _one_minus(p):
    return ad.shift(ad.scale(p, -1.0), 1.0)


def adversarial_d_loss(score_real, score_fake):
    """-E[log D_rf] - E[log(1 - D_fr)].

    Callers must present `score_fake` computed from detached generator
    output so only the discriminator receives gradients.
    """
    d_rf, d_fr = relativistic_pair(score_real, score_fake)
    return ad.scale(ad.add(ad.mean(_log_prob(d_rf)),
                           ad.mean(_log_prob(_one_minus(d_fr)))), -1.0)


def adversarial_g_loss(score_real, score_fake):
    """-E[log D_fr] - E[log(1 - D_rf)], the generator-side complement.

    Callers score with frozen discriminator weights so gradients reach
    the generator only. Equals `adversarial_d_loss` with the roles of
    real and fake swapped; both sit at 2 ln 2 when scores coincide.
    """
    d_rf, d_fr = relativistic_pair(score_real, score_fake)
    return ad.scale(ad.add(ad.mean(_log_prob(d_fr)),
                           ad.mean(_log_prob(_one_minus(d_rf)))), -1.0)


def wavelet_loss(sr_band, hr_band):
    """Mean absolute error between one generated and one real sub-band."""
    if sr_band.shape != hr_band.shape:
        raise ShapeError(f"band shapes differ: {sr_band.shape} vs {hr_band.shape}")
    return ad.mean(ad.abs_(ad.sub(sr_band, hr_band)))


def pixel_loss_charbonnier(sr_image, hr_image, epsilon=1e-6):
    """Mean of sqrt((hr - sr)^2 + eps^2), a smooth L1 on the recomposed image."""
    if sr_image.shape != hr_image.shape:
        raise ShapeError(f"image shapes differ: {sr_image.shape} vs {hr_image.shape}")
    if epsilon <= 0:
        raise ShapeError(f"epsilon must be positive, got {epsilon}")
    diff = ad.sub(sr_image, hr_image)
    return ad.mean(ad.sqrt(ad.shift(ad.mul(diff, diff), epsilon * epsilon)))


def total_g_loss(adv_g, wavelet, pixel, weights: LossWeights, use_wavelet_loss=True):
    """sum_i lambda_i (alpha adv_i + wavelet_i) + beta pixel, as tensors.

    `adv_g` and `wavelet` are 4-element sequences of scalar tensors in
    A, H, V, D order. With the wavelet loss ablated its terms vanish
    from the sum entirely.
    """
    total = None
    for lam, adv_i, wav_i in zip(weights.lambdas, adv_g, wavelet):
        band_loss = ad.scale(adv_i, weights.alpha)
        if use_wavelet_loss:
            band_loss = ad.add(band_loss, wav_i)
        term = ad.scale(band_loss, lam)
        total = term if total is None else ad.add(total, term)
    return ad.add(total, ad.scale(pixel, weights.beta))


def total_d_loss(adv_d):
    """Plain sum of the four per-band discriminator losses."""
    total = adv_d[0]
    for term in adv_d[1:]:
        total = ad.add(total, term)
    return total

"""Alternating adversarial training loop, checkpointing, evaluation.

Each step runs the discriminator update first (on detached generator
output), then one generator update (with frozen discriminators) that
trains all four generators, the attention gate, and the learnable
synthesis kernels through a single backward pass.

Batch selection is a pure function of (seed, step), so a resumed run
continues the exact trajectory of the uninterrupted one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import config as cfgmod
from . import losses as L
from . import metrics as M
from .autodiff import Tape, Tensor, backward
from .data import DatasetManifest, load_manifest, save_grayscale, upsample
from .errors import CheckpointError, ConfigError, DataError, NumericError
from .networks import FpGanModel
from .optim import Adam
from .wavelet import dwt2

BAND_LABELS = ("a", "h", "v", "d")


@dataclass
class TrainerState:
    cfg: cfgmod.TrainConfig
    model: FpGanModel
    adam_g: Adam
    adam_d: Adam
    adam_idwt: Adam
    step: int = 0
    loss_tail: list = None

    def __post_init__(self):
        if self.loss_tail is None:
            self.loss_tail = []


def build_state(cfg: cfgmod.TrainConfig) -> TrainerState:
    cfg.validate()
    model = FpGanModel(cfg.model_config(), seed=cfg.seed)
    adam_g = Adam(model.generator_parameters(), cfg.lr_g)
    adam_d = Adam(model.discriminator_parameters(), cfg.lr_d)
    adam_idwt = Adam(model.idwt_parameters(), cfg.lr_idwt)
    return TrainerState(cfg, model, adam_g, adam_d, adam_idwt)


# ---------------------------------------------------------------------------
# checkpoint round trip


def save_checkpoint(state: TrainerState, path):
    arrays = {}
    for name, p in state.model.named_parameters():
        arrays[f"param.{name}"] = p.data
    for name, b in state.model.named_buffers():
        arrays[f"buffer.{name}"] = b.data
    for tag, opt in (("g", state.adam_g), ("d", state.adam_d),
                     ("idwt", state.adam_idwt)):
        for key, arr in opt.state_dict().items():
            arrays[f"optim.{tag}.{key}"] = arr
    arrays["meta.step"] = np.asarray([state.step], dtype=np.float64)
    tail = "\n".join(state.loss_tail[-100:])
    arrays["meta.loss_tail"] = np.frombuffer(tail.encode("utf-8"), dtype=np.uint8).copy()
    ckpt.save(path, cfgmod.to_text(state.cfg), arrays)


def load_checkpoint(path) -> TrainerState:
    config_text, arrays = ckpt.load(path)
    cfg = cfgmod.from_text(config_text)
    state = build_state(cfg)
    consumed = set()

    def take(name):
        if name not in arrays:
            raise CheckpointError(f"checkpoint missing record {name!r}")
        consumed.add(name)
        return arrays[name]

    for name, p in state.model.named_parameters():
        arr = take(f"param.{name}")
        if arr.shape != p.data.shape:
            raise CheckpointError(f"shape mismatch for {name}: "
                                  f"{arr.shape} vs {p.data.shape}")
        p.data = arr.astype(p.dtype)
    for name, b in state.model.named_buffers():
        b.data = take(f"buffer.{name}").astype(b.dtype)
    for tag, opt in (("g", state.adam_g), ("d", state.adam_d),
                     ("idwt", state.adam_idwt)):
        sd = {}
        prefix = f"optim.{tag}."
        for key in list(arrays):
            if key.startswith(prefix):
                sd[key[len(prefix):]] = take(key)
        opt.load_state_dict(sd)
    state.step = int(take("meta.step")[0])
    tail = take("meta.loss_tail").tobytes().decode("utf-8")
    state.loss_tail = tail.splitlines() if tail else []
    leftover = set(arrays) - consumed
    if leftover:
        raise CheckpointError(f"checkpoint has unknown records: {sorted(leftover)}")
    return state


# ---------------------------------------------------------------------------
# one optimization step


def _guard(term, step, fn):
    try:
        return fn()
    except NumericError as exc:
        raise NumericError(f"non-finite {term} at step {step}: {exc}") from exc


def batch_indices(seed, step, n, batch_size):
    """Stateless per-step batch sampling (resume-safe)."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBA7C, int(step)]))
    return rng.choice(n, size=batch_size, replace=batch_size > n)


def train_step(state: TrainerState, batch_lr: Tensor, batch_hr: Tensor) -> L.LossReport:
    cfg, model = state.cfg, state.model
    step = state.step
    report = L.LossReport(step=step)

    # fresh real targets every step from the frozen analysis transform
    hr_bands = dwt2(batch_hr, model.filters)

    with Tape() as tape_g:
        sr, sr_bands, _weighted = model.forward(batch_lr)

    # --- discriminator phase (generator output detached) ---
    with Tape() as tape_d:
        adv_d_terms = []
        for i, disc in enumerate(model.discriminators):
            real = hr_bands[i].detach()
            fake = sr_bands[i].detach()
            term = _guard(f"adv_d_{BAND_LABELS[i]}", step,
                          lambda d=disc, r=real, f=fake:
                          L.adversarial_d_loss(d(r), d(f)))
            adv_d_terms.append(term)
        total_d = L.total_d_loss(adv_d_terms)
    backward(total_d, tape_d)
    state.adam_d.step()
    tape_d.clear()

    # --- generator phase (discriminators frozen, scores recomputed) ---
    for disc in model.discriminators:
        disc.freeze()
    try:
        with tape_g:
            adv_g_terms, wavelet_terms = [], []
            for i, disc in enumerate(model.discriminators):
                real_scores = disc(hr_bands[i].detach())
                fake_scores = disc(sr_bands[i])
                adv = _guard(f"adv_g_{BAND_LABELS[i]}", step,
                             lambda r=real_scores, f=fake_scores:
                             L.adversarial_g_loss(r, f))
                wav = _guard(f"wavelet_{BAND_LABELS[i]}", step,
                             lambda s=sr_bands[i], h=hr_bands[i]:
                             L.wavelet_loss(s, h.detach()))
                adv_g_terms.append(adv)
                wavelet_terms.append(wav)
            pixel = _guard("pixel", step,
                           lambda: L.pixel_loss_charbonnier(sr, batch_hr,
                                                            cfg.loss.epsilon))
            total_g = _guard("total_g", step,
                             lambda: L.total_g_loss(adv_g_terms, wavelet_terms,
                                                    pixel, cfg.loss,
                                                    cfg.use_wavelet_loss))
        backward(total_g, tape_g)
    finally:
        for disc in model.discriminators:
            disc.unfreeze()
    state.adam_g.step()
    state.adam_idwt.step()
    tape_g.clear()

    report.adv_g = [t.item() for t in adv_g_terms]
    report.adv_d = [t.item() for t in adv_d_terms]
    report.wavelet = [t.item() for t in wavelet_terms]
    report.pixel = pixel.item()
    report.total_g = total_g.item()
    report.total_d = total_d.item()
    report.attention_weights = list(
        np.asarray(model.attention.weights().data, dtype=np.float64))
    return report


# ---------------------------------------------------------------------------
# training loop


def _load_split_arrays(manifest: DatasetManifest, tag, cfg):
    if manifest.scale != cfg.scale:
        raise ConfigError(f"manifest scale {manifest.scale} != config scale {cfg.scale}")
    pairs = []
    for rec in manifest.split(tag):
        lr, hr = manifest.load_pair(rec)
        if hr.shape[-1] != cfg.hr_size or hr.shape[-2] != cfg.hr_size:
            raise DataError(f"{rec.id}: HR size {hr.shape[-2:]} != config "
                            f"hr_size {cfg.hr_size}")
        if hr.shape[-1] != cfg.scale * lr.shape[-1]:
            raise DataError(f"{rec.id}: LR/HR sizes inconsistent with scale")
        pairs.append((rec.id, lr.data, hr.data))
    return pairs


def train(cfg: cfgmod.TrainConfig, out_dir, resume=None, log=None):
    """Run the full loop; returns the final checkpoint path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if resume is not None:
        state = load_checkpoint(resume)
        cfg = state.cfg  # a resumed run continues its own configuration
    else:
        cfg.validate()
        state = build_state(cfg)
    (out_dir / "effective-config.ini").write_text(cfgmod.to_text(cfg),
                                                  encoding="utf-8")

    manifest = load_manifest(cfg.manifest)
    train_pairs = _load_split_arrays(manifest, "train", cfg)
    n_train = len(train_pairs)

    loss_csv = out_dir / "loss_log.csv"
    mode = "a" if (resume is not None and loss_csv.exists()) else "w"
    t0 = time.monotonic()
    with open(loss_csv, mode, encoding="utf-8") as fh:
        if mode == "w":
            fh.write(L.LossReport.CSV_HEADER + "\n")
        while state.step < cfg.iterations:
            idx = batch_indices(cfg.seed, state.step, n_train, cfg.batch_size)
            batch_lr = Tensor(np.concatenate([train_pairs[i][1] for i in idx]))
            batch_hr = Tensor(np.concatenate([train_pairs[i][2] for i in idx]))
            report = train_step(state, batch_lr, batch_hr)
            row = report.csv_row()
            fh.write(row + "\n")
            state.loss_tail.append(row)
            state.loss_tail = state.loss_tail[-100:]
            state.step += 1
            if log is not None and (state.step % 25 == 0 or state.step == 1):
                log(f"step {state.step}/{cfg.iterations} "
                    f"total_g={report.total_g:.4f} total_d={report.total_d:.4f} "
                    f"({time.monotonic() - t0:.0f}s)")
            if cfg.eval_every and state.step % cfg.eval_every == 0 \
                    and state.step < cfg.iterations:
                save_checkpoint(state, out_dir / "ckpt-latest.fpsr")

    final = out_dir / "model.fpsr"
    save_checkpoint(state, final)
    return final


# ---------------------------------------------------------------------------
# evaluation


def evaluate(model: FpGanModel, manifest: DatasetManifest, split_tag,
             baselines=True, out_images=None, max_samples=4):
    """PSNR/SSIM of the model over one split, with interpolation baselines.

    Returns (ids, {method: AggregateResult}). Never mutates the model.
    With `out_images` set, writes difference heatmaps (normalized over
    the whole split) and LR | bicubic | model | HR sample panels there.
    """
    recs = manifest.split(split_tag)
    scale = manifest.scale
    methods = ["model"] + (["bicubic", "bilinear"] if baselines else [])
    per_method = {m: [] for m in methods}
    diffs, samples, ids = [], [], []

    for rec in recs:
        lr, hr = manifest.load_pair(rec)
        sr, _, _ = model.forward(lr)
        sr_img = np.clip(sr.data[0, 0], 0.0, 1.0)
        hr_img = hr.data[0, 0]
        per_method["model"].append(M.MetricResult(M.psnr(sr_img, hr_img),
                                                  M.ssim(sr_img, hr_img)))
        base_imgs = {}
        if baselines:
            for method in ("bicubic", "bilinear"):
                up = np.clip(upsample(lr, scale, method).data[0, 0], 0.0, 1.0)
                base_imgs[method] = up
                per_method[method].append(M.MetricResult(M.psnr(up, hr_img),
                                                         M.ssim(up, hr_img)))
        ids.append(rec.id)
        if out_images is not None:
            diffs.append(np.abs(sr_img - hr_img))
            if len(samples) < max_samples:
                lr_up = upsample(lr, scale, "nearest").data[0, 0]
                bic = base_imgs.get("bicubic")
                if bic is None:
                    bic = np.clip(upsample(lr, scale, "bicubic").data[0, 0], 0.0, 1.0)
                samples.append((rec.id, np.concatenate(
                    [lr_up, bic, sr_img, hr_img], axis=1)))

    if out_images is not None:
        out = Path(out_images)
        out.mkdir(parents=True, exist_ok=True)
        norm = max((float(d.max()) for d in diffs), default=0.0)
        for rec_id, d in zip(ids, diffs):
            M.save_heatmap_png(M.diff_heatmap(d, np.zeros_like(d), norm_max=norm),
                               out / f"diff-{rec_id}.png")
        for rec_id, panel in samples:
            save_grayscale(panel, out / f"sample-{rec_id}.png", bitdepth=8)

    return ids, {m: M.AggregateResult.from_results(v) for m, v in per_method.items()}


def write_metrics_csv(path, ids, aggregates):
    """Per-image rows, then mean/std rows, per method."""
    lines = ["method,id,psnr_db,ssim"]
    for method, agg in aggregates.items():
        for rec_id, res in zip(ids, agg.per_image):
            lines.append(f"{method},{rec_id},{res.psnr_db:.9g},{res.ssim:.9g}")
        lines.append(f"{method},mean,{agg.psnr_mean:.9g},{agg.ssim_mean:.9g}")
        lines.append(f"{method},std,{agg.psnr_std:.9g},{agg.ssim_std:.9g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

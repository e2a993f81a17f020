"""Dataset construction: grayscale ingest, center crop, paired LR/HR
synthesis by downsampling, and a seeded phantom generator for desk-scale
training runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .autodiff import Tensor
from .errors import DataError, ShapeError

RESAMPLE_METHODS = ("bicubic", "bilinear", "nearest")


# ---------------------------------------------------------------------------
# image IO


def load_grayscale(path):
    """Read an 8- or 16-bit single-channel PNG/PGM as a 1x1xHxW tensor in [0, 1]."""
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    if img.mode == "L":
        maxval = 255.0
    elif img.mode in ("I;16", "I;16B", "I"):
        maxval = 65535.0
    else:
        raise DataError(f"{path}: unsupported mode {img.mode!r}, need 8/16-bit grayscale")
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim != 2:
        raise DataError(f"{path}: expected a single channel, got shape {arr.shape}")
    return Tensor((arr / maxval)[None, None])


def save_grayscale(image, path, bitdepth=16):
    """Write a [0, 1] image as PNG (8/16-bit by extension-independent flag)
    or binary PGM (8-bit)."""
    arr = np.asarray(image.data if hasattr(image, "data") else image, dtype=np.float64)
    arr = np.squeeze(arr)
    if arr.ndim != 2:
        raise ShapeError(f"save_grayscale: expected a 2-D image, got {arr.shape}")
    arr = np.clip(arr, 0.0, 1.0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".pgm":
        q = np.round(arr * 255.0).astype(np.uint8)
        with open(path, "wb") as fh:
            fh.write(f"P5\n{q.shape[1]} {q.shape[0]}\n255\n".encode())
            fh.write(q.tobytes())
        return
    if bitdepth == 8:
        Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(path, "PNG")
    elif bitdepth == 16:
        Image.fromarray(np.round(arr * 65535.0).astype(np.uint16)).save(path, "PNG")
    else:
        raise DataError(f"bitdepth must be 8 or 16, got {bitdepth}")


# ---------------------------------------------------------------------------
# geometry


def center_crop(image, size):
    """Centered square window; offset floor((dim - size) / 2)."""
    arr = image.data if hasattr(image, "data") else np.asarray(image)
    h, w = arr.shape[-2], arr.shape[-1]
    if size > h or size > w:
        raise DataError(f"crop {size} larger than image {h}x{w}")
    oy, ox = (h - size) // 2, (w - size) // 2
    out = arr[..., oy:oy + size, ox:ox + size]
    return Tensor(np.ascontiguousarray(out))


def _catmull_rom(t):
    # Keys kernel with a = -0.5
    at = abs(t)
    if at <= 1.0:
        return 1.5 * at ** 3 - 2.5 * at ** 2 + 1.0
    if at < 2.0:
        return -0.5 * at ** 3 + 2.5 * at ** 2 - 4.0 * at + 2.0
    return 0.0


def _tent(t):
    at = abs(t)
    return 1.0 - at if at < 1.0 else 0.0


def resample_matrix(n_in, n_out, method):
    """Row-stochastic (n_out, n_in) matrix realizing 1-D resampling.

    Centers align as src = (dst + 0.5) * n_in/n_out - 0.5. When
    minifying, the kernel is stretched by the scale factor (antialias
    prefilter). Out-of-range taps clamp to the edge sample.
    """
    if method == "nearest":
        # decimation keeps top-left samples; enlargement replicates blocks
        m = np.zeros((n_out, n_in))
        scale = n_in / n_out
        for o in range(n_out):
            m[o, min(int(o * scale), n_in - 1)] = 1.0
        return m
    kernel = {"bicubic": (_catmull_rom, 2.0), "bilinear": (_tent, 1.0)}[method]
    kfun, support = kernel
    scale = n_in / n_out
    stretch = max(scale, 1.0)
    radius = support * stretch
    m = np.zeros((n_out, n_in))
    for o in range(n_out):
        center = (o + 0.5) * scale - 0.5
        lo = int(math.floor(center - radius)) + 1
        hi = int(math.floor(center + radius))
        for s in range(lo, hi + 1):
            wgt = kfun((s - center) / stretch)
            if wgt != 0.0:
                m[o, min(max(s, 0), n_in - 1)] += wgt
        m[o] /= m[o].sum()
    return m


def resize(image, out_h, out_w, method):
    """Deterministic separable resampling of the trailing two axes."""
    if method not in RESAMPLE_METHODS:
        raise DataError(f"unknown resampling method {method!r}")
    arr = np.asarray(image.data if hasattr(image, "data") else image, dtype=np.float64)
    h, w = arr.shape[-2], arr.shape[-1]
    mr = resample_matrix(h, out_h, method)
    mc = resample_matrix(w, out_w, method)
    flat = arr.reshape(-1, h, w)
    out = np.einsum("oh,nhw,pw->nop", mr, flat, mc, optimize=True)
    out = out.reshape(arr.shape[:-2] + (out_h, out_w))
    return Tensor(out.astype(np.float32))


def downsample(image, factor, method="bicubic"):
    """Shrink by an integer factor; dims must divide evenly."""
    arr = image.data if hasattr(image, "data") else np.asarray(image)
    h, w = arr.shape[-2], arr.shape[-1]
    if factor < 1:
        raise DataError(f"factor must be >= 1, got {factor}")
    if h % factor or w % factor:
        raise DataError(f"image {h}x{w} not divisible by factor {factor}")
    if factor == 1:
        return Tensor(np.asarray(arr, dtype=np.float32).copy())
    return resize(image, h // factor, w // factor, method)


def upsample(image, factor, method="bicubic"):
    """Enlarge by an integer factor (interpolation baselines)."""
    arr = image.data if hasattr(image, "data") else np.asarray(image)
    h, w = arr.shape[-2], arr.shape[-1]
    if factor < 1:
        raise DataError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return Tensor(np.asarray(arr, dtype=np.float32).copy())
    return resize(image, h * factor, w * factor, method)


# ---------------------------------------------------------------------------
# synthetic phantoms


def synthesize_phantom(seed, size):
    """Deterministic test image: filled ellipses, sinusoidal ridge
    texture, and a mild smooth intensity bias, normalized to [0, 1].

    Contains both low-frequency topology and fine periodic texture so
    every wavelet sub-band carries signal.
    """
    if size % 2:
        raise DataError(f"phantom size must be even, got {size}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x9A17]))
    yy, xx = np.meshgrid(np.linspace(-1, 1, size), np.linspace(-1, 1, size),
                         indexing="ij")

    # smooth bias field
    img = 0.25 + 0.1 * (rng.uniform(-1, 1) * xx + rng.uniform(-1, 1) * yy)

    def ellipse_mask(cx, cy, ax, ay, angle):
        xr = (xx - cx) * math.cos(angle) + (yy - cy) * math.sin(angle)
        yr = -(xx - cx) * math.sin(angle) + (yy - cy) * math.cos(angle)
        return (xr / ax) ** 2 + (yr / ay) ** 2 <= 1.0

    # big enclosing ellipse plus a few internal structures
    outer = ellipse_mask(0.0, 0.0, rng.uniform(0.75, 0.92), rng.uniform(0.75, 0.92),
                         rng.uniform(0, math.pi))
    img += 0.35 * outer
    for _ in range(int(rng.integers(2, 5))):
        m = ellipse_mask(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                         rng.uniform(0.12, 0.45), rng.uniform(0.12, 0.45),
                         rng.uniform(0, math.pi))
        img += rng.uniform(-0.3, 0.35) * (m & outer)

    # ridge-like texture: periodic stripes inside one or two regions
    px = np.arange(size)
    gy, gx = np.meshgrid(px, px, indexing="ij")
    for _ in range(2):
        region = ellipse_mask(rng.uniform(-0.35, 0.35), rng.uniform(-0.35, 0.35),
                              rng.uniform(0.25, 0.6), rng.uniform(0.25, 0.6),
                              rng.uniform(0, math.pi))
        theta = rng.uniform(0, math.pi)
        period = rng.uniform(5.0, 9.0)  # in HR pixels: fine but alias-free at x2
        phase = rng.uniform(0, 2 * math.pi)
        wave = np.sin(2 * math.pi * (math.cos(theta) * gx + math.sin(theta) * gy)
                      / period + phase)
        img += 0.16 * wave * (region & outer)

    lo, hi = img.min(), img.max()
    img = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    return Tensor(img.astype(np.float32)[None, None])


# ---------------------------------------------------------------------------
# manifests and dataset builds


@dataclass
class ManifestRecord:
    id: str
    hr_path: str
    lr_path: str
    split: str


@dataclass
class DatasetManifest:
    records: list
    scale: int
    seed: int
    root: Path

    def split(self, tag):
        recs = [r for r in self.records if r.split == tag]
        if not recs:
            raise DataError(f"manifest has no records in split {tag!r}")
        return recs

    def load_pair(self, rec):
        hr = load_grayscale(self.root / rec.hr_path)
        lr = load_grayscale(self.root / rec.lr_path)
        return lr, hr


def save_manifest(manifest, path):
    path = Path(path)
    lines = [f"# scale={manifest.scale} seed={manifest.seed}"]
    for r in sorted(manifest.records, key=lambda r: r.id):
        lines.append(f"{r.id}\t{r.hr_path}\t{r.lr_path}\t{r.split}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path):
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not lines or not lines[0].startswith("#"):
        raise DataError(f"{path}: missing manifest header line")
    header = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    try:
        scale, seed = int(header["scale"]), int(header["seed"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed header {lines[0]!r}") from exc
    records = []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        parts = ln.split("\t")
        if len(parts) != 4:
            raise DataError(f"{path}: malformed record {ln!r}")
        records.append(ManifestRecord(*parts))
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate ids in manifest")
    return DatasetManifest(records, scale, seed, path.parent)


def _assign_splits(ids, fractions, seed):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x57113]))
    order = list(ids)
    rng.shuffle(order)
    n = len(order)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    split_of = {}
    for i, name in enumerate(order):
        if i < n_train:
            split_of[name] = "train"
        elif i < n_train + n_val:
            split_of[name] = "val"
        else:
            split_of[name] = "test"
    return split_of


def build_dataset(source, out_dir, scale, crop, seed,
                  splits=(0.8, 0.1, 0.1), phantom_count=None):
    """Write HR/LR image pairs plus a manifest under `out_dir`.

    `source` is a directory of grayscale images, or None with
    `phantom_count` set to synthesize that many phantoms at the crop
    size. HR images are center-cropped, LR images are bicubic
    downsamples. Fully deterministic for a fixed seed.
    """
    out_dir = Path(out_dir)
    if crop % (2 * scale):
        raise DataError(f"crop {crop} must be divisible by 2*scale={2 * scale} "
                        "(wavelet evenness on both resolutions)")
    sources = []
    if phantom_count is not None:
        if phantom_count < 1:
            raise DataError("phantom count must be positive")
        digits = max(3, len(str(phantom_count - 1)))
        for i in range(phantom_count):
            sources.append((f"phantom-{i:0{digits}d}", None))
    else:
        src = Path(source)
        files = sorted(p for p in src.iterdir()
                       if p.suffix.lower() in (".png", ".pgm"))
        if not files:
            raise DataError(f"no .png/.pgm images found in {src}")
        for p in files:
            sources.append((p.stem, p))

    split_of = _assign_splits([name for name, _ in sources], splits, seed)
    (out_dir / "hr").mkdir(parents=True, exist_ok=True)
    (out_dir / "lr").mkdir(parents=True, exist_ok=True)

    records = []
    for idx, (name, path) in enumerate(sources):
        if path is None:
            img = synthesize_phantom(seed + idx, crop)
        else:
            img = load_grayscale(path)
        hr = center_crop(img, crop)
        lr = downsample(hr, scale, "bicubic")
        lr = Tensor(np.clip(lr.data, 0.0, 1.0))
        hr_rel, lr_rel = f"hr/{name}.png", f"lr/{name}.png"
        save_grayscale(hr, out_dir / hr_rel, bitdepth=16)
        save_grayscale(lr, out_dir / lr_rel, bitdepth=16)
        records.append(ManifestRecord(name, hr_rel, lr_rel, split_of[name]))

    manifest = DatasetManifest(records, scale, seed, out_dir)
    save_manifest(manifest, out_dir / "manifest.tsv")
    return manifest

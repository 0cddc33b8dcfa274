"""Dataset manifests, deterministic splits, image decode, synthetic generator.

The required image codec is binary PPM (P6), implemented here from scratch;
PNG/JPEG files are accepted too when Pillow is importable, negotiated by file
extension (or content type at the service boundary).  Preprocessing is a pure
function of the file bytes: center-crop to a square, bilinear resize with
half-pixel-center sampling, scale to [0,1], then standardize with the fixed
constants mean 0.5 / std 0.25 per channel.

The synthetic generator stands in for the unavailable 20-class food photo
collection: each class is a parametric shape/texture/hue recipe rendered with
per-sample jitter (position, scale, rotation, hue noise, background clutter),
so the classification task needs real feature learning without being
ambiguous.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .autograd import Tensor
from .errors import ConfigError, DecodeError, SplitError, ValidationError

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"

# Starter class vocabulary; generate_synthetic_dataset takes the first n and
# falls back to numbered names beyond 20.
FOOD_CLASS_NAMES = (
    "dal", "idli", "dosa", "samosa", "biryani",
    "naan", "paneer_tikka", "chole", "rajma", "poha",
    "upma", "vada", "pakora", "jalebi", "gulab_jamun",
    "butter_chicken", "palak_paneer", "aloo_gobi", "chapati", "pongal",
)

IMAGE_MEAN = 0.5
IMAGE_STD = 0.25


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    """Class-name table plus (relative path, label) sample records."""

    class_names: list[str]
    samples: list[tuple[str, int]]
    source: str = "synthetic"
    seed: int = 0
    root: Optional[Path] = field(default=None, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        k = len(self.class_names)
        if k < 1:
            raise ValidationError("manifest has no classes")
        if len(set(self.class_names)) != k:
            raise ValidationError("manifest class names are not unique")
        counts = [0] * k
        seen_paths = set()
        for path, label in self.samples:
            if not (0 <= label < k):
                raise ValidationError(f"sample {path!r} has label {label} outside [0, {k})")
            if path in seen_paths:
                raise ValidationError(f"duplicate sample path {path!r}")
            seen_paths.add(path)
            counts[label] += 1
        empty = [self.class_names[i] for i, c in enumerate(counts) if c == 0]
        if empty:
            raise ValidationError(f"classes with no samples: {empty}")

    def class_counts(self) -> list[int]:
        counts = [0] * len(self.class_names)
        for _, label in self.samples:
            counts[label] += 1
        return counts

    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.samples], dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "class_names": list(self.class_names),
            "samples": [{"path": p, "label": l} for p, l in self.samples],
            "source": self.source,
            "seed": self.seed,
        }

    def save(self, path) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
        if raw.get("version") != MANIFEST_VERSION:
            raise ValidationError(f"{path}: unsupported manifest version {raw.get('version')}")
        return cls(
            class_names=list(raw["class_names"]),
            samples=[(s["path"], int(s["label"])) for s in raw["samples"]],
            source=raw.get("source", "external"),
            seed=int(raw.get("seed", 0)),
            root=path.parent,
        )


@dataclass
class SplitSpec:
    """Stratified split request: train fraction, optional k folds, seed."""

    train_fraction: float = 0.7
    folds: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ConfigError(f"train_fraction must be in (0,1), got {self.train_fraction}")
        if self.folds is not None and self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")


def _per_class_indices(manifest: DatasetManifest) -> list[np.ndarray]:
    labels = manifest.labels()
    return [np.flatnonzero(labels == c) for c in range(len(manifest.class_names))]


def split_dataset(manifest: DatasetManifest, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per class, floor(train_fraction * count) samples to train, rest to test.

    The split is stratified, disjoint, exhaustive, and deterministic for a
    fixed seed.
    """
    train_parts, test_parts = [], []
    for c, idx in enumerate(_per_class_indices(manifest)):
        if len(idx) < 2:
            raise SplitError(
                f"class {manifest.class_names[c]!r} has {len(idx)} sample(s); need >= 2")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, c])))
        shuffled = idx[rng.permutation(len(idx))]
        n_train = int(math.floor(spec.train_fraction * len(idx)))
        train_parts.append(shuffled[:n_train])
        test_parts.append(shuffled[n_train:])
    train = np.sort(np.concatenate(train_parts)).astype(np.int64)
    test = np.sort(np.concatenate(test_parts)).astype(np.int64)
    return train, test


def kfold(manifest: DatasetManifest, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold partition; each sample validates in exactly one fold."""
    if k < 2:
        raise SplitError(f"k must be >= 2, got {k}")
    per_class_chunks = []
    for c, idx in enumerate(_per_class_indices(manifest)):
        if len(idx) < k:
            raise SplitError(
                f"class {manifest.class_names[c]!r} has {len(idx)} samples; k={k} needs >= {k}")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, c])))
        shuffled = idx[rng.permutation(len(idx))]
        per_class_chunks.append(np.array_split(shuffled, k))
    folds = []
    all_indices = np.arange(len(manifest.samples), dtype=np.int64)
    for fold in range(k):
        val = np.sort(np.concatenate([chunks[fold] for chunks in per_class_chunks]))
        mask = np.ones(len(all_indices), dtype=bool)
        mask[val] = False
        folds.append((all_indices[mask], val.astype(np.int64)))
    return folds


# ---------------------------------------------------------------------------
# PPM codec
# ---------------------------------------------------------------------------

def encode_ppm(image: np.ndarray) -> bytes:
    """Binary PPM (P6, maxval 255) bytes for an [h,w,3] uint8 array."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError(f"encode_ppm needs [h,w,3] uint8, got {image.shape} {image.dtype}")
    h, w = image.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + image.tobytes()


def decode_ppm(data: bytes, source: str = "<bytes>") -> np.ndarray:
    """Parse binary PPM (P6) bytes into an [h,w,3] uint8 array."""
    if not data.startswith(b"P6"):
        raise DecodeError(f"{source}: not a binary PPM (P6) file")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise DecodeError(f"{source}: malformed PPM header near byte {start}")
        fields.append(int(token))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise DecodeError(f"{source}: unsupported PPM maxval {maxval} (need 255)")
    expected = width * height * 3
    raw = data[pos:pos + expected]
    if len(raw) != expected:
        raise DecodeError(f"{source}: truncated PPM pixel data "
                          f"({len(raw)} of {expected} bytes)")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3).copy()


def decode_image_bytes(data: bytes, codec: str, source: str = "<bytes>") -> np.ndarray:
    """Decode image bytes to [h,w,3] uint8 by codec name ('ppm', 'png', ...)."""
    codec = codec.lower().lstrip(".")
    if codec in ("ppm", "x-portable-pixmap"):
        return decode_ppm(data, source)
    if codec in ("png", "jpeg", "jpg"):
        try:
            from PIL import Image
        except ImportError as exc:
            raise DecodeError(f"{source}: {codec} decoding needs Pillow") from exc
        import io
        try:
            with Image.open(io.BytesIO(data)) as img:
                return np.asarray(img.convert("RGB"), dtype=np.uint8)
        except Exception as exc:
            raise DecodeError(f"{source}: cannot decode as {codec}: {exc}") from exc
    raise DecodeError(f"{source}: unknown codec {codec!r}")


def load_image(path) -> np.ndarray:
    """Decode an image file to [h,w,3] uint8, choosing the codec by extension."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DecodeError(f"{path}: cannot read: {exc}") from exc
    return decode_image_bytes(data, path.suffix or "ppm", source=str(path))


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-center coordinates.

    At scale 1 the sample points land exactly on source pixel centers, so a
    same-size call is the identity.
    """
    h, w = image.shape[:2]
    if (h, w) == (out_h, out_w):
        return image.astype(np.float32) if image.dtype != np.float32 else image.copy()
    img = image.astype(np.float32)

    def axis_coords(n_src, n_dst):
        coords = (np.arange(n_dst, dtype=np.float64) + 0.5) * (n_src / n_dst) - 0.5
        coords = np.clip(coords, 0.0, n_src - 1.0)
        lo = np.floor(coords).astype(np.int64)
        hi = np.minimum(lo + 1, n_src - 1)
        frac = (coords - lo).astype(np.float32)
        return lo, hi, frac

    y0, y1, fy = axis_coords(h, out_h)
    x0, x1, fx = axis_coords(w, out_w)
    top = img[y0][:, x0] * (1 - fx)[None, :, None] + img[y0][:, x1] * fx[None, :, None]
    bot = img[y1][:, x0] * (1 - fx)[None, :, None] + img[y1][:, x1] * fx[None, :, None]
    return top * (1 - fy)[:, None, None] + bot * fy[:, None, None]


def center_crop_square(image: np.ndarray) -> np.ndarray:
    h, w = image.shape[:2]
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return image[top:top + side, left:left + side]


def preprocess(image: np.ndarray, size: int = 64) -> np.ndarray:
    """uint8 [h,w,3] -> standardized float32 [3,size,size]."""
    square = center_crop_square(image)
    resized = bilinear_resize(square, size, size)
    scaled = resized / 255.0
    standardized = (scaled - IMAGE_MEAN) / IMAGE_STD
    return np.ascontiguousarray(standardized.transpose(2, 0, 1), dtype=np.float32)


def decode_and_preprocess(path, size: int = 64) -> Tensor:
    """Decode an image file and shape it for model input."""
    return Tensor(preprocess(load_image(path), size=size))


def load_split_arrays(manifest: DatasetManifest, indices: Sequence[int],
                      size: int = 64, root=None) -> tuple[np.ndarray, np.ndarray]:
    """Decode+preprocess the given manifest rows into (x [n,3,s,s], y [n])."""
    root = Path(root) if root is not None else manifest.root
    if root is None:
        raise ValueError("manifest has no root directory; pass root=")
    xs = np.empty((len(indices), 3, size, size), dtype=np.float32)
    ys = np.empty(len(indices), dtype=np.int64)
    for row, i in enumerate(indices):
        path, label = manifest.samples[int(i)]
        xs[row] = preprocess(load_image(root / path), size=size)
        ys[row] = label
    return xs, ys


# ---------------------------------------------------------------------------
# Synthetic dataset generator
# ---------------------------------------------------------------------------

_SHAPES = ("disk", "ring", "square", "diamond", "triangle",
           "cross", "hstripes", "vstripes", "checker", "dots")


def _hsv_to_rgb(h, s, v):
    """Vectorized HSV -> RGB on arrays in [0,1]."""
    h = np.asarray(h, dtype=np.float64) % 1.0
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    i = np.floor(h * 6.0).astype(np.int64) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1 - s)
    q = v * (1 - f * s)
    t = v * (1 - (1 - f) * s)
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def class_recipe(label: int, n_classes: int) -> dict:
    """Deterministic shape/hue/texture recipe for one class."""
    return {
        "shape": _SHAPES[label % len(_SHAPES)],
        "hue": (0.35 * label + 0.05) % 1.0,
        "texture_freq": 3.0 + (label % 3),
    }


def render_synthetic_image(label: int, n_classes: int, image_size: int,
                           rng: np.random.Generator) -> np.ndarray:
    """One jittered sample of the class recipe, as [h,w,3] uint8.

    Rendered at 2x and box-downsampled for soft edges.
    """
    recipe = class_recipe(label, n_classes)
    big = image_size * 2

    # background: smooth two-color gradient plus small clutter patches
    bg_hues = rng.uniform(0.0, 1.0, size=2)
    bg_sv = rng.uniform(0.05, 0.25, size=2), rng.uniform(0.25, 0.55, size=2)
    c0 = _hsv_to_rgb(bg_hues[0], bg_sv[0][0], bg_sv[1][0])
    c1 = _hsv_to_rgb(bg_hues[1], bg_sv[0][1], bg_sv[1][1])
    ramp = np.linspace(0.0, 1.0, big)
    if rng.random() < 0.5:
        grad = ramp[:, None, None]
    else:
        grad = ramp[None, :, None]
    img = np.empty((big, big, 3), dtype=np.float64)
    img[...] = c0 * (1 - grad) + c1 * grad

    yy, xx = np.mgrid[0:big, 0:big].astype(np.float64) / big

    n_clutter = rng.integers(2, 6)
    for _ in range(n_clutter):
        cw = rng.uniform(0.04, 0.11)
        ch = rng.uniform(0.04, 0.11)
        cx = rng.uniform(0.05, 0.95)
        cy = rng.uniform(0.05, 0.95)
        col = _hsv_to_rgb(rng.uniform(0, 1), rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.8))
        box = (np.abs(xx - cx) < cw) & (np.abs(yy - cy) < ch)
        img[box] = col

    # main shape with jittered placement, scale, rotation, and hue noise
    cx = rng.uniform(0.38, 0.62)
    cy = rng.uniform(0.38, 0.62)
    radius = rng.uniform(0.21, 0.30)
    angle = rng.uniform(-0.26, 0.26)  # ~±15 degrees
    hue = (recipe["hue"] + rng.uniform(-0.04, 0.04)) % 1.0
    sat = rng.uniform(0.65, 0.95)
    val = rng.uniform(0.7, 1.0)

    u = (xx - cx) * np.cos(angle) - (yy - cy) * np.sin(angle)
    v = (xx - cx) * np.sin(angle) + (yy - cy) * np.cos(angle)
    r = np.hypot(u, v)
    shape = recipe["shape"]
    R = radius
    if shape == "disk":
        mask = r <= R
    elif shape == "ring":
        mask = (r <= R) & (r >= 0.55 * R)
    elif shape == "square":
        mask = np.maximum(np.abs(u), np.abs(v)) <= 0.85 * R
    elif shape == "diamond":
        mask = (np.abs(u) + np.abs(v)) <= 1.15 * R
    elif shape == "triangle":
        mask = (v <= 0.5 * R) & (v >= -R + 1.724 * np.abs(u))
    elif shape == "cross":
        arm = 0.34 * R
        mask = ((np.abs(u) <= arm) & (np.abs(v) <= R)) | ((np.abs(v) <= arm) & (np.abs(u) <= R))
    else:
        mask = r <= R

    freq = recipe["texture_freq"] * np.pi / R
    if shape == "hstripes":
        tone = np.sin(v * freq) > 0
    elif shape == "vstripes":
        tone = np.sin(u * freq) > 0
    elif shape == "checker":
        tone = (np.sin(u * freq) * np.sin(v * freq)) > 0
    elif shape == "dots":
        tone = (np.sin(u * freq * 1.5) > 0.2) & (np.sin(v * freq * 1.5) > 0.2)
    else:
        tone = np.ones_like(mask)

    fill_a = _hsv_to_rgb(hue, sat, val)
    fill_b = _hsv_to_rgb(hue, sat, val * 0.45)
    fill = np.where(tone[..., None], fill_a, fill_b)
    img = np.where(mask[..., None], fill, img)

    # pixel noise, then 2x box downsample
    img = img + rng.normal(0.0, 0.025, size=img.shape)
    small = img.reshape(image_size, 2, image_size, 2, 3).mean(axis=(1, 3))
    return (np.clip(small, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def synthetic_class_names(n_classes: int) -> list[str]:
    names = list(FOOD_CLASS_NAMES[:n_classes])
    for i in range(len(names), n_classes):
        names.append(f"food_{i:02d}")
    return names


def generate_synthetic_dataset(n_classes: int, per_class: int, image_size: int,
                               seed: int, out_dir) -> DatasetManifest:
    """Render the synthetic class recipes to PPM files plus a manifest.

    Deterministic for a fixed seed: per-sample RNG streams are keyed by
    (seed, label, sample index), so regenerating yields byte-identical files.
    """
    if n_classes < 2:
        raise ConfigError(f"n_classes must be >= 2, got {n_classes}")
    if per_class < 2:
        raise ConfigError(f"per_class must be >= 2, got {per_class}")
    if image_size < 16:
        raise ConfigError(f"image_size must be >= 16, got {image_size}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out_dir}: {exc}") from exc

    names = synthetic_class_names(n_classes)
    samples = []
    for label, name in enumerate(names):
        class_dir = out_dir / name
        class_dir.mkdir(exist_ok=True)
        for i in range(per_class):
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence([seed, label, i])))
            image = render_synthetic_image(label, n_classes, image_size, rng)
            rel = f"{name}/{name}_{i:04d}.ppm"
            with open(out_dir / rel, "wb") as f:
                f.write(encode_ppm(image))
            samples.append((rel, label))

    manifest = DatasetManifest(class_names=names, samples=samples,
                               source="synthetic", seed=seed, root=out_dir)
    manifest.save(out_dir / MANIFEST_NAME)
    return manifest

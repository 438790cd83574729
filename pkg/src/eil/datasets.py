"""Dataset ingestion: IDX files, auto-download, and rendered fallback corpora.

Real corpora (MNIST, EMNIST letters) are read from IDX files under a data
directory (``--data-dir`` or ``EIL_DATA_DIR``), optionally fetched over the
network.  For fully self-contained runs the module can also render synthetic
glyph corpora (``digits-syn``, ``letters-syn``, ``shapes-syn``) from bundled
TTF fonts with randomized affine distortion and noise; rendered corpora are
cached to disk in the same IDX layout, so every dataset flows through one
ingestion path.
"""

from __future__ import annotations

import gzip
import hashlib
import os
import struct
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw, ImageFilter, ImageFont

from .errors import ValidationError

IMG_SIZE = 28

_MNIST_URLS = {
    "train-images-idx3-ubyte.gz": "https://ossci-datasets.s3.amazonaws.com/mnist/train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz": "https://ossci-datasets.s3.amazonaws.com/mnist/train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz": "https://ossci-datasets.s3.amazonaws.com/mnist/t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz": "https://ossci-datasets.s3.amazonaws.com/mnist/t10k-labels-idx1-ubyte.gz",
}


@dataclass
class LabeledImages:
    """An in-memory labeled image set (uint8 images, int labels)."""

    images: np.ndarray  # (N, H, W) uint8
    labels: np.ndarray  # (N,) int64
    name: str = "unnamed"
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.uint8)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3:
            raise ValidationError(f"images must be (N, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValidationError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.images)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, indices, name: str | None = None) -> "LabeledImages":
        indices = np.asarray(indices)
        return LabeledImages(
            self.images[indices],
            self.labels[indices],
            name=name or f"{self.name}[{len(indices)}]",
            class_names=self.class_names,
        )

    def to_tensors(self) -> tuple[torch.Tensor, torch.Tensor]:
        """Float images in [-1, 1] shaped (N, 1, H, W) plus long labels.

        The [-1, 1] range is shared with the generator's tanh output so that
        classifiers and generated samples live in one input space.
        """
        x = torch.from_numpy(self.images).float().div_(127.5).sub_(1.0).unsqueeze(1)
        y = torch.from_numpy(self.labels)
        return x, y

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.images.tobytes())
        h.update(self.labels.tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# IDX format
# ---------------------------------------------------------------------------

def _open_maybe_gzip(path: Path, mode: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def read_idx_images(path) -> np.ndarray:
    with _open_maybe_gzip(Path(path), "rb") as f:
        magic, n, rows, cols = struct.unpack(">IIII", f.read(16))
        if magic != 0x00000803:
            raise ValidationError(f"{path}: bad IDX image magic {magic:#x}")
        data = np.frombuffer(f.read(n * rows * cols), dtype=np.uint8)
    return data.reshape(n, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    with _open_maybe_gzip(Path(path), "rb") as f:
        magic, n = struct.unpack(">II", f.read(8))
        if magic != 0x00000801:
            raise ValidationError(f"{path}: bad IDX label magic {magic:#x}")
        data = np.frombuffer(f.read(n), dtype=np.uint8)
    return data.astype(np.int64)


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with _open_maybe_gzip(Path(path), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 255:
        raise ValidationError("IDX labels must fit in uint8")
    with _open_maybe_gzip(Path(path), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def _find_idx_pair(directory: Path, stems: list[str]) -> Path | None:
    for stem in stems:
        for suffix in ("", ".gz"):
            p = directory / (stem + suffix)
            if p.exists():
                return p
    return None


# ---------------------------------------------------------------------------
# Synthetic corpora
# ---------------------------------------------------------------------------

def _font_paths() -> list[str]:
    import matplotlib

    ttf_dir = Path(matplotlib.__file__).parent / "mpl-data" / "fonts" / "ttf"
    wanted = [
        "DejaVuSans.ttf",
        "DejaVuSans-Bold.ttf",
        "DejaVuSans-Oblique.ttf",
        "DejaVuSans-BoldOblique.ttf",
        "DejaVuSerif.ttf",
        "DejaVuSerif-Bold.ttf",
        "DejaVuSerif-Italic.ttf",
        "DejaVuSerif-BoldItalic.ttf",
        "DejaVuSansMono.ttf",
        "DejaVuSansMono-Bold.ttf",
        "DejaVuSansMono-Oblique.ttf",
        "DejaVuSansMono-BoldOblique.ttf",
        "STIXGeneral.ttf",
        "STIXGeneralBol.ttf",
        "STIXGeneralItalic.ttf",
        "STIXGeneralBolIta.ttf",
    ]
    paths = [str(ttf_dir / w) for w in wanted if (ttf_dir / w).exists()]
    if not paths:
        raise ValidationError("no bundled TTF fonts found; cannot render corpus")
    return paths


_FONT_CACHE: dict[tuple[str, int], ImageFont.FreeTypeFont] = {}


def _get_font(path: str, size: int) -> ImageFont.FreeTypeFont:
    key = (path, size)
    if key not in _FONT_CACHE:
        _FONT_CACHE[key] = ImageFont.truetype(path, size)
    return _FONT_CACHE[key]


def _render_glyph(char: str, rng: np.random.Generator, fonts: list[str]) -> np.ndarray:
    # Draw at 2x resolution, distort, then downsample for soft strokes.
    big = IMG_SIZE * 2
    font = _get_font(fonts[rng.integers(len(fonts))], int(rng.integers(34, 46)))
    canvas = Image.new("L", (big, big), 0)
    draw = ImageDraw.Draw(canvas)
    left, top, right, bottom = draw.textbbox((0, 0), char, font=font)
    draw.text(
        ((big - (right - left)) / 2 - left, (big - (bottom - top)) / 2 - top),
        char,
        fill=255,
        font=font,
    )

    theta = np.deg2rad(rng.uniform(-16, 16))
    shear = rng.uniform(-0.2, 0.2)
    scale = rng.uniform(0.8, 1.05)
    tx, ty = rng.uniform(-4, 4, size=2)
    cos, sin = np.cos(theta) / scale, np.sin(theta) / scale
    cx = cy = big / 2
    # Inverse affine about the canvas center, as PIL's transform expects.
    a, b = cos, sin + shear * cos
    d, e = -sin, cos + shear * -sin
    c = cx - a * (cx + tx) - b * (cy + ty)
    f = cy - d * (cx + tx) - e * (cy + ty)
    canvas = canvas.transform((big, big), Image.AFFINE, (a, b, c, d, e, f), Image.BILINEAR)

    blur = rng.uniform(0.0, 1.2)
    if blur > 0.2:
        canvas = canvas.filter(ImageFilter.GaussianBlur(blur))
    img = np.asarray(canvas.resize((IMG_SIZE, IMG_SIZE), Image.BILINEAR), dtype=np.float32)
    img *= rng.uniform(0.75, 1.0)
    img += rng.normal(0.0, rng.uniform(2.0, 8.0), img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def _render_glyph_corpus(
    chars: list[str], n: int, seed: int, name: str
) -> LabeledImages:
    rng = np.random.default_rng(seed)
    fonts = _font_paths()
    per = [n // len(chars)] * len(chars)
    for i in range(n - sum(per)):
        per[i] += 1
    images = np.empty((n, IMG_SIZE, IMG_SIZE), dtype=np.uint8)
    labels = np.empty(n, dtype=np.int64)
    i = 0
    for cls, (char, count) in enumerate(zip(chars, per)):
        for _ in range(count):
            images[i] = _render_glyph(char, rng, fonts)
            labels[i] = cls
            i += 1
    order = rng.permutation(n)
    return LabeledImages(images[order], labels[order], name=name, class_names=chars)


def render_digit_corpus(n: int, seed: int = 0) -> LabeledImages:
    """Font-rendered handwritten-digit stand-in (classes '0'..'9')."""
    return _render_glyph_corpus([str(d) for d in range(10)], n, seed, "digits-syn")


def render_letter_corpus(n: int, seed: int = 0) -> LabeledImages:
    """Font-rendered letter corpus (classes 'A'..'Z'), digit-free by construction."""
    chars = [chr(ord("A") + i) for i in range(26)]
    return _render_glyph_corpus(chars, n, seed, "letters-syn")


_SHAPE_NAMES = ["circle", "square", "triangle", "cross", "hbars", "vbars", "diamond", "ring"]


def _render_shape(cls: int, rng: np.random.Generator) -> np.ndarray:
    big = IMG_SIZE * 2
    canvas = Image.new("L", (big, big), 0)
    draw = ImageDraw.Draw(canvas)
    c = big / 2 + rng.uniform(-6, 6, size=2)
    r = rng.uniform(12, 22)
    w = int(rng.integers(2, 6))
    name = _SHAPE_NAMES[cls]
    if name == "circle":
        draw.ellipse([c[0] - r, c[1] - r, c[0] + r, c[1] + r], fill=255)
    elif name == "square":
        draw.rectangle([c[0] - r, c[1] - r, c[0] + r, c[1] + r], fill=255)
    elif name == "triangle":
        draw.polygon([(c[0], c[1] - r), (c[0] - r, c[1] + r), (c[0] + r, c[1] + r)], fill=255)
    elif name == "cross":
        draw.line([c[0] - r, c[1] - r, c[0] + r, c[1] + r], fill=255, width=w + 3)
        draw.line([c[0] - r, c[1] + r, c[0] + r, c[1] - r], fill=255, width=w + 3)
    elif name == "hbars":
        step = int(rng.integers(8, 14))
        for y in range(int(rng.integers(0, step)), big, step):
            draw.line([0, y, big, y], fill=255, width=w)
    elif name == "vbars":
        step = int(rng.integers(8, 14))
        for x in range(int(rng.integers(0, step)), big, step):
            draw.line([x, 0, x, big], fill=255, width=w)
    elif name == "diamond":
        draw.polygon(
            [(c[0], c[1] - r), (c[0] + r, c[1]), (c[0], c[1] + r), (c[0] - r, c[1])], fill=255
        )
    else:  # ring
        draw.ellipse([c[0] - r, c[1] - r, c[0] + r, c[1] + r], outline=255, width=w + 2)
    canvas = canvas.rotate(rng.uniform(-30, 30), resample=Image.BILINEAR)
    img = np.asarray(
        canvas.resize((IMG_SIZE, IMG_SIZE), Image.BILINEAR), dtype=np.float32
    )
    img *= rng.uniform(0.6, 1.0)
    img += rng.normal(0.0, rng.uniform(2.0, 10.0), img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def render_shape_corpus(n: int, seed: int = 0) -> LabeledImages:
    """Procedural geometric shapes, used to train a digit-unrelated feature extractor."""
    rng = np.random.default_rng(seed)
    images = np.empty((n, IMG_SIZE, IMG_SIZE), dtype=np.uint8)
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        labels[i] = i % len(_SHAPE_NAMES)
        images[i] = _render_shape(int(labels[i]), rng)
    order = rng.permutation(n)
    return LabeledImages(images[order], labels[order], name="shapes-syn", class_names=_SHAPE_NAMES)


# ---------------------------------------------------------------------------
# Named dataset loading
# ---------------------------------------------------------------------------

_SYNTH_DEFAULTS = {
    # name -> (render fn, default train size, default test size, render seed)
    "digits-syn": (render_digit_corpus, 12000, 2400, 1),
    "letters-syn": (render_letter_corpus, 8000, 1600, 2),
    "shapes-syn": (render_shape_corpus, 4000, 800, 3),
}

DATASET_NAMES = ("mnist", "emnist-letters", *_SYNTH_DEFAULTS)


def default_data_dir() -> Path:
    env = os.environ.get("EIL_DATA_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "eil-data"


def _download(url: str, dest: Path) -> None:
    try:
        with urllib.request.urlopen(url, timeout=60) as resp:
            dest.write_bytes(resp.read())
    except (urllib.error.URLError, OSError) as exc:
        raise ValidationError(
            f"could not download {url}: {exc}. Place the IDX files under "
            f"{dest.parent} manually, or use a synthetic dataset "
            f"({', '.join(_SYNTH_DEFAULTS)})."
        ) from exc


def _load_idx_split(directory: Path, split: str, name: str) -> LabeledImages:
    prefix = "train" if split == "train" else "t10k"
    stems = [f"{prefix}-images-idx3-ubyte", f"{prefix}-images.idx3-ubyte"]
    if name == "emnist-letters":
        stems = [f"emnist-letters-{prefix.replace('t10k', 'test')}-images-idx3-ubyte"] + stems
    img_path = _find_idx_pair(directory, stems)
    lbl_path = _find_idx_pair(directory, [s.replace("images-idx3", "labels-idx1").replace("images.idx3", "labels.idx1") for s in stems])
    if img_path is None or lbl_path is None:
        raise ValidationError(
            f"no IDX files for {name} ({split}) under {directory}; expected e.g. "
            f"{stems[0]}[.gz]"
        )
    images = read_idx_images(img_path)
    labels = read_idx_labels(lbl_path)
    if name == "emnist-letters":
        images = images.transpose(0, 2, 1)  # EMNIST stores column-major pixels
        labels = labels - labels.min()  # EMNIST letters label 'A' as 1
    return LabeledImages(images, labels, name=f"{name}-{split}")


def load_dataset(
    name: str,
    split: str = "train",
    data_dir=None,
    download: bool = False,
    train_size: int | None = None,
    test_size: int | None = None,
) -> LabeledImages:
    """Load a named dataset split, rendering and caching synthetic ones on demand.

    Synthetic corpora are written to ``data_dir`` as IDX files on first use so
    later loads (and hash checks) go through the exact same reader as MNIST.
    """
    if name not in DATASET_NAMES:
        raise ValidationError(f"unknown dataset {name!r}; known: {', '.join(DATASET_NAMES)}")
    if split not in ("train", "test"):
        raise ValidationError(f"split must be 'train' or 'test', got {split!r}")
    data_dir = Path(data_dir) if data_dir is not None else default_data_dir()

    if name in _SYNTH_DEFAULTS:
        render, d_train, d_test, seed = _SYNTH_DEFAULTS[name]
        n_train = train_size or d_train
        n_test = test_size or d_test
        directory = data_dir / f"{name}-{n_train}x{n_test}"
        try:
            return _load_idx_split(directory, split, name)
        except ValidationError:
            pass
        directory.mkdir(parents=True, exist_ok=True)
        # One rendering pass, split deterministically: test seed offset keeps
        # the two splits disjoint draws from the same distribution.
        train = render(n_train, seed=seed)
        test = render(n_test, seed=seed + 1000)
        write_idx_images(directory / "train-images-idx3-ubyte", train.images)
        write_idx_labels(directory / "train-labels-idx1-ubyte", train.labels)
        write_idx_images(directory / "t10k-images-idx3-ubyte", test.images)
        write_idx_labels(directory / "t10k-labels-idx1-ubyte", test.labels)
        return _load_idx_split(directory, split, name)

    directory = data_dir / name
    try:
        return _load_idx_split(directory, split, name)
    except ValidationError:
        if not download or name != "mnist":
            raise
    directory.mkdir(parents=True, exist_ok=True)
    for fname, url in _MNIST_URLS.items():
        if not (directory / fname).exists():
            _download(url, directory / fname)
    return _load_idx_split(directory, split, name)

"""Datasets: CelebA-style annotation files, PGM/PPM images and a synthetic
multi-label generator with landmark targets.

On-disk layout written by :func:`write_split` / read by :func:`read_split`::

    root/attribute_groups.txt     one "name group" pair per line
    root/<part>/list_attr.txt     count line, names line, "file v1 .. vJ" rows
    root/<part>/landmarks.txt     "file x1 y1 x2 y2 ..." in pixel coordinates
    root/<part>/images/*.pgm      8-bit binary PGM (P5) or PPM (P6)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import OBJECTIVE, SUBJECTIVE, AttributeSpec


class ParseError(ValueError):
    def __init__(self, path, line: int | None, message: str):
        self.path, self.line = str(path), line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


@dataclass
class Dataset:
    images: np.ndarray          # (N, C, H, W), values in [0, 1]
    labels: np.ndarray          # (N, J), entries +/-1
    landmarks: np.ndarray       # (N, 2T), normalised to [0, 1]
    files: list[str]
    jitter: np.ndarray | None = None   # synthetic only: per-sample (dy, dx) layout shift

    def __post_init__(self):
        n = len(self.files)
        if not (len(self.images) == len(self.labels) == len(self.landmarks) == n):
            raise ValueError("images, labels, landmarks and files must have equal length")
        if not np.all(np.abs(self.labels) == 1):
            raise ValueError("labels must be +1 or -1")

    def __len__(self):
        return len(self.files)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.landmarks[idx],
                       [self.files[i] for i in idx],
                       None if self.jitter is None else self.jitter[idx])


@dataclass
class DatasetSplit:
    train: Dataset
    val: Dataset
    test: Dataset
    spec: AttributeSpec

    def parts(self):
        return {"train": self.train, "val": self.val, "test": self.test}


# -- annotation files ------------------------------------------------------

def _label(token: str, path, line: int) -> int:
    if token not in ("1", "-1", "+1"):
        raise ParseError(path, line, f"label {token!r} is not +1 or -1")
    return int(token)


def parse_attribute_file(path) -> tuple[list[str], list[str], np.ndarray]:
    """Return ``(names, files, labels)`` from a CelebA ``list_attr`` file."""
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2:
        raise ParseError(path, len(lines) + 1, "missing header lines")
    try:
        count = int(lines[0].strip())
    except ValueError:
        raise ParseError(path, 1, f"image count {lines[0].strip()!r} is not an integer") from None
    names = lines[1].split()
    if not names:
        raise ParseError(path, 2, "no attribute names")
    files, rows = [], []
    for lineno, text in enumerate(lines[2:], start=3):
        tokens = text.split()
        if not tokens:
            continue
        if len(tokens) != len(names) + 1:
            raise ParseError(path, lineno,
                             f"expected filename + {len(names)} labels, got {len(tokens)} tokens")
        files.append(tokens[0])
        rows.append([_label(tok, path, lineno) for tok in tokens[1:]])
    if len(files) != count:
        raise ParseError(path, 1, f"header says {count} images, found {len(files)}")
    labels = np.array(rows, dtype=np.float64).reshape(len(files), len(names))
    return names, files, labels


def write_attribute_file(path, names, files, labels) -> None:
    out = [str(len(files)), " ".join(names)]
    for f, row in zip(files, np.asarray(labels)):
        out.append(f + " " + " ".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(out) + "\n")


def parse_landmark_file(path, image_sizes=None, n_values: int | None = None):
    """Return ``(files, coords)``; coords are normalised when ``image_sizes`` is given.

    ``image_sizes`` is either one ``(width, height)`` pair for all images or a
    mapping from filename to ``(width, height)``.  x is divided by the width
    and y by the height.
    """
    files, rows = [], []
    for lineno, text in enumerate(Path(path).read_text().splitlines(), start=1):
        tokens = text.split()
        if not tokens:
            continue
        values = tokens[1:]
        expected = n_values if n_values is not None else (len(rows[0]) if rows else None)
        if len(values) == 0 or len(values) % 2 or (expected is not None and len(values) != expected):
            raise ParseError(path, lineno,
                             f"{tokens[0]}: expected {expected or 'an even number of'} "
                             f"coordinates, got {len(values)}")
        try:
            rows.append([float(v) for v in values])
        except ValueError:
            raise ParseError(path, lineno, f"{tokens[0]}: non-numeric coordinate") from None
        files.append(tokens[0])
    coords = np.array(rows, dtype=np.float64)
    if image_sizes is not None and len(files):
        scale = np.empty_like(coords)
        for i, f in enumerate(files):
            w, h = image_sizes[f] if isinstance(image_sizes, dict) else image_sizes
            scale[i, 0::2], scale[i, 1::2] = w, h
        coords = coords / scale
    return files, coords


def write_landmark_file(path, files, coords) -> None:
    lines = [f + " " + " ".join(repr(float(v)) for v in row) for f, row in zip(files, coords)]
    Path(path).write_text("\n".join(lines) + "\n")


# -- PGM / PPM -------------------------------------------------------------

_PNM_HEADER = re.compile(rb"^(P[56])\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s")


def read_pnm(path) -> np.ndarray:
    """Read an 8-bit binary PGM/PPM as a ``(C, H, W)`` array in [0, 1]."""
    raw = Path(path).read_bytes()
    m = _PNM_HEADER.match(raw)
    if not m:
        raise ParseError(path, None, "not a binary 8-bit PGM/PPM file")
    kind, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise ParseError(path, None, f"unsupported maxval {maxval}")
    c = 1 if kind == b"P5" else 3
    pixels = np.frombuffer(raw, dtype=np.uint8, count=w * h * c, offset=m.end())
    return pixels.reshape(h, w, c).transpose(2, 0, 1) / 255.0


def write_pnm(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    c, h, w = image.shape
    if c not in (1, 3):
        raise ValueError("PNM images need 1 or 3 channels")
    pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    header = f"{'P5' if c == 1 else 'P6'}\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + pixels.transpose(1, 2, 0).tobytes())


# -- split IO --------------------------------------------------------------

def write_groups(path, spec: AttributeSpec) -> None:
    Path(path).write_text("".join(f"{n} {g}\n" for n, g in zip(spec.names, spec.groups)))


def read_groups(path) -> AttributeSpec:
    pairs = []
    for lineno, text in enumerate(Path(path).read_text().splitlines(), start=1):
        tokens = text.split()
        if not tokens:
            continue
        if len(tokens) != 2 or tokens[1] not in (OBJECTIVE, SUBJECTIVE):
            raise ParseError(path, lineno, "expected '<name> objective|subjective'")
        pairs.append(tuple(tokens))
    return AttributeSpec.from_pairs(pairs)


def write_dataset(ds: Dataset, names, directory) -> None:
    d = Path(directory)
    (d / "images").mkdir(parents=True, exist_ok=True)
    write_attribute_file(d / "list_attr.txt", names, ds.files, ds.labels)
    _, _, h, w = ds.images.shape
    pixel = ds.landmarks.copy()
    pixel[:, 0::2] *= w
    pixel[:, 1::2] *= h
    write_landmark_file(d / "landmarks.txt", ds.files, pixel)
    for f, img in zip(ds.files, ds.images):
        write_pnm(d / "images" / f, img)


def read_dataset(directory, spec: AttributeSpec | None = None) -> Dataset:
    d = Path(directory)
    names, files, labels = parse_attribute_file(d / "list_attr.txt")
    if spec is not None and list(names) != list(spec.names):
        raise ParseError(d / "list_attr.txt", 2, "attribute names do not match the attribute groups")
    images = [read_pnm(d / "images" / f) for f in files]
    shapes = {im.shape for im in images}
    if len(shapes) > 1:
        raise ValueError(f"{d}: images in one split must share a size, found {sorted(shapes)}")
    sizes = {f: (im.shape[2], im.shape[1]) for f, im in zip(files, images)}
    mfiles, marks = parse_landmark_file(d / "landmarks.txt", sizes)
    order = {f: i for i, f in enumerate(mfiles)}
    missing = [f for f in files if f not in order]
    if missing:
        raise ParseError(d / "landmarks.txt", None, f"no landmarks for {missing[0]}")
    marks = marks[[order[f] for f in files]]
    return Dataset(np.stack(images), labels, marks, list(files))


def write_split(split: DatasetSplit, root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    write_groups(root / "attribute_groups.txt", split.spec)
    for part, ds in split.parts().items():
        write_dataset(ds, split.spec.names, root / part)


def read_split(root) -> DatasetSplit:
    root = Path(root)
    spec = read_groups(root / "attribute_groups.txt")
    parts = {p: read_dataset(root / p, spec) for p in ("train", "val", "test")}
    return DatasetSplit(spec=spec, **parts)


# -- synthetic generator -----------------------------------------------------

# 3x3 binary stamps, one per attribute slot (cycled when J > len)
PATTERNS = [
    np.array(p, dtype=np.float64) for p in (
        [[1, 1, 1], [0, 0, 0], [0, 0, 0]],
        [[1, 0, 0], [1, 0, 0], [1, 0, 0]],
        [[1, 1, 1], [1, 0, 1], [1, 1, 1]],
        [[0, 1, 0], [1, 1, 1], [0, 1, 0]],
        [[1, 0, 1], [0, 1, 0], [1, 0, 1]],
        [[0, 0, 0], [1, 1, 1], [0, 0, 0]],
        [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        [[0, 0, 1], [0, 1, 0], [1, 0, 0]],
    )
]


@dataclass
class SynthConfig:
    """Knobs of the synthetic task.

    Defaults: six attributes, three clean "objective" ones and three noisy
    "subjective" ones, the last of which is positive only 5% of the time.
    """

    rates: tuple[float, ...] = (0.5, 0.4, 0.3, 0.5, 0.35, 0.05)
    difficulty: tuple[float, ...] = (0.0, 0.0, 0.0, 0.8, 1.0, 1.0)
    groups: tuple[str, ...] = (OBJECTIVE,) * 3 + (SUBJECTIVE,) * 3
    names: tuple[str, ...] | None = None
    landmarks: int = 4
    size: int = 16
    n_train: int = 2000
    n_val: int = 500
    n_test: int = 500
    background: float = 0.2
    pixel_noise: float = 0.03
    noise_scale: float = 0.5
    landmark_shift: float = 1.0
    landmark_noise: float = 0.5
    jitter: int = 1
    seed: int = 0

    def __post_init__(self):
        J = len(self.rates)
        if J == 0 or len(self.difficulty) != J or len(self.groups) != J:
            raise ValueError("rates, difficulty and groups must have one entry per attribute")
        if any(not 0 < r < 1 for r in self.rates):
            raise ValueError("positive rates must lie in (0, 1)")
        if any(d < 0 for d in self.difficulty):
            raise ValueError("difficulty must be non-negative")
        if self.names is None:
            self.names = tuple(f"attr{j}" for j in range(J))
        if self.landmarks < 1 or self.size < 8:
            raise ValueError("need T >= 1 landmarks and images at least 8 pixels wide")

    @property
    def J(self) -> int:
        return len(self.rates)

    @property
    def spec(self) -> AttributeSpec:
        return AttributeSpec(self.names, self.groups)


def slot_centers(J: int, size: int) -> np.ndarray:
    """Integer (row, col) centre of each attribute's stamp on a regular grid."""
    ncols = math.ceil(math.sqrt(J))
    nrows = math.ceil(J / ncols)
    margin = 2
    span = size - 2 * margin
    out = []
    for j in range(J):
        r, c = divmod(j, ncols)
        out.append((margin + int((r + 0.5) * span / nrows) - 1,
                    margin + int((c + 0.5) * span / ncols)))
    return np.array(out)


def landmark_anchors(cfg: SynthConfig) -> list[int]:
    """Attribute each landmark hangs off: subjective attributes first."""
    order = [j for j in range(cfg.J) if cfg.groups[j] == SUBJECTIVE]
    order += [j for j in range(cfg.J) if cfg.groups[j] != SUBJECTIVE]
    return [order[t % cfg.J] for t in range(cfg.landmarks)]


def _render(cfg: SynthConfig, z: np.ndarray, rng: np.random.Generator):
    n, J, S = len(z), cfg.J, cfg.size
    centers = slot_centers(J, S)
    anchors = landmark_anchors(cfg)
    jit = rng.integers(-cfg.jitter, cfg.jitter + 1, size=(n, 2))
    img = cfg.background + cfg.pixel_noise * rng.standard_normal((n, S, S))

    for j in range(J):
        d = cfg.difficulty[j]
        amp = 1.0 / (1.0 + d)
        stamp = PATTERNS[j % len(PATTERNS)]
        noise = cfg.noise_scale * d * rng.standard_normal((n, 3, 3))
        for i in range(n):
            r, c = centers[j] + jit[i]
            img[i, r - 1:r + 2, c - 1:c + 2] += z[i, j] * amp * stamp + noise[i]

    marks = np.empty((n, 2 * cfg.landmarks))
    for t, j in enumerate(anchors):
        d = cfg.difficulty[j]
        row = centers[j, 0] + 2 + jit[:, 0] + cfg.landmark_noise * d * rng.standard_normal(n)
        col = (centers[j, 1] + jit[:, 1] + cfg.landmark_shift * z[:, j]
               + cfg.landmark_noise * d * rng.standard_normal(n))
        row = np.clip(row, 0, S - 1)
        col = np.clip(col, 0, S - 1)
        ri, ci = np.rint(row).astype(int), np.rint(col).astype(int)
        img[np.arange(n), ri, ci] += 0.4
        # pixel centres: a dot at integer index k sits at coordinate k + 0.5
        marks[:, 2 * t] = (col + 0.5) / S
        marks[:, 2 * t + 1] = (row + 0.5) / S

    img = np.rint(np.clip(img, 0.0, 1.0) * 255.0) / 255.0
    return img[:, None], marks, jit


def generate_synthetic(cfg: SynthConfig) -> DatasetSplit:
    rng = np.random.default_rng(cfg.seed)
    rates = np.asarray(cfg.rates)
    parts = {}
    for part, n in (("train", cfg.n_train), ("val", cfg.n_val), ("test", cfg.n_test)):
        z = (rng.random((n, cfg.J)) < rates).astype(np.float64)
        images, marks, jit = _render(cfg, z, rng)
        files = [f"{part}_{i:06d}.pgm" for i in range(n)]
        parts[part] = Dataset(images, 2.0 * z - 1.0, marks, files, jit)
    return DatasetSplit(spec=cfg.spec, **parts)


def template_decode(ds: Dataset, cfg: SynthConfig) -> np.ndarray:
    """Nearest-template label decoder that knows the generator's layout.

    For each attribute it compares the stamp region against the "absent"
    and "present" templates and picks the closer one.
    """
    if ds.jitter is None:
        raise ValueError("template_decode needs the synthetic jitter metadata")
    centers = slot_centers(cfg.J, cfg.size)
    out = np.empty((len(ds), cfg.J))
    for j in range(cfg.J):
        stamp = PATTERNS[j % len(PATTERNS)]
        present = cfg.background + stamp / (1.0 + cfg.difficulty[j])
        absent = np.full((3, 3), cfg.background)
        for i in range(len(ds)):
            r, c = centers[j] + ds.jitter[i]
            patch = ds.images[i, 0, r - 1:r + 2, c - 1:c + 2]
            dp = np.sum((patch - present) ** 2 * (stamp > 0))
            da = np.sum((patch - absent) ** 2 * (stamp > 0))
            out[i, j] = 1.0 if dp < da else -1.0
    return out


def shuffled_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Permutation used for ``epoch``; a pure function of ``(seed, epoch)``."""
    return np.random.default_rng([seed, epoch]).permutation(n)

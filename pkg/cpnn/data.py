"""
Synthetic data, noise, quality metrics, Gaussian blur and file formats.

Every random draw comes from a Philox counter generator keyed by (seed, stream, index), so
each sample can be produced on its own and parallel generation does not depend on order.
"""
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image
from scipy import ndimage, signal

from .algebra import bcirc_apply, bcirc_apply_adjoint
from .exceptions import DimensionError, ParseError, ValidationError
from .structures import FilterBank

logger = logging.getLogger(__name__)

DATASET_KINDS = ("pwc_1d", "image_patches")
BOUNDARIES = ("periodic", "valid")

#: Separate random streams, so that signals and noise of one sample never share draws.
STREAM_SIGNAL = 0
STREAM_NOISE = 1
STREAM_IMAGE = 2
STREAM_PATCH = 3

MANIFEST = "manifest.json"

PathLike = Union[str, "os.PathLike[str]"]


def sample_rng(
    seed: int, index: int, stream: int = STREAM_SIGNAL
) -> np.random.Generator:
    """
    Generator dedicated to one sample of one stream.
    >>> a = sample_rng(7, 3).standard_normal()
    >>> b = sample_rng(7, 3).standard_normal()
    >>> a == b
    True
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True)
class Dataset:
    """
    Pairs of clean signals (or image patches) and their noisy counterparts. The noise
    realization is stored, it is the residual training target ε = noisy − clean.
    """

    clean: np.ndarray
    noise: np.ndarray
    sigma: float
    seed: int
    kind: str = "pwc_1d"
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in DATASET_KINDS:
            raise ValidationError(
                f"Unknown dataset kind '{self.kind}', expected one of {DATASET_KINDS}."
            )

        if np.shape(self.clean) != np.shape(self.noise):
            raise DimensionError(
                f"Clean samples {np.shape(self.clean)} and noise {np.shape(self.noise)} "
                "must be paired."
            )

        if self.sigma < 0.0:
            raise ValidationError(f"σ must be non-negative, got {self.sigma}.")

    @property
    def noisy(self) -> np.ndarray:
        return self.clean + self.noise

    @property
    def count(self) -> int:
        return int(np.shape(self.clean)[0])

    @property
    def shape(self) -> Tuple[int, ...]:
        """Shape of one sample."""
        return tuple(np.shape(self.clean)[1:])

    def subset(self, indices: Union[slice, Sequence[int], np.ndarray]) -> "Dataset":
        return Dataset(
            self.clean[indices],
            self.noise[indices],
            self.sigma,
            self.seed,
            self.kind,
            dict(self.meta),
        )


def _generate(
    count: int, build: Any, workers: int
) -> List[Any]:
    if workers <= 1 or count < 2:
        return [build(i) for i in range(count)]

    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(build, range(count)))


def _pwc_signal(length: int, seed: int, index: int) -> Tuple[np.ndarray, int]:
    rng = sample_rng(seed, index, STREAM_SIGNAL)

    parts = int(min(max(2, rng.poisson(5.0)), length))
    cuts = rng.choice(np.arange(1, length), size=parts - 1, replace=False)
    breakpoints = np.sort(cuts)
    levels = rng.standard_normal(parts)

    widths = np.diff(np.concatenate([[0], breakpoints, [length]]))
    values = np.repeat(levels, widths)

    return values - values.mean(), parts


def gen_pwc(count: int, length: int, seed: int, workers: int = 1) -> Dataset:
    """
    Piecewise constant signals of zero mean: max(2, Poisson(5)) parts split at uniformly
    drawn breakpoints, standard normal levels. The noise is left at zero, see add_noise.
    """
    if length < 4:
        raise ValidationError(f"Signals need at least 4 samples, got {length}.")

    if count < 0:
        raise ValidationError(f"Sample count must be non-negative, got {count}.")

    drawn = _generate(count, lambda i: _pwc_signal(length, seed, i), workers)
    clean = np.array([s for s, _ in drawn]).reshape(count, length)
    parts = np.array([p for _, p in drawn], dtype=int)

    logger.debug("Generated %d piecewise constant signals of length %d.", count, length)

    return Dataset(
        clean, np.zeros_like(clean), 0.0, seed, "pwc_1d", {"parts": parts}
    )


def add_noise(
    signals: np.ndarray, sigma: float, seed: int, workers: int = 1
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Add i.i.d. N(0, σ²) noise to every sample. Returns the noisy samples and the noise.
    >>> noisy, noise = add_noise(np.ones((2, 4)), 0.0, seed=1)
    >>> noisy.tolist()
    [[1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0]]
    """
    if sigma < 0.0:
        raise ValidationError(f"σ must be non-negative, got {sigma}.")

    samples = np.asarray(signals, dtype=float)

    def draw(index: int) -> np.ndarray:
        rng = sample_rng(seed, index, STREAM_NOISE)
        return sigma * rng.standard_normal(samples.shape[1:])

    noise = np.array(_generate(samples.shape[0], draw, workers)).reshape(samples.shape)
    return samples + noise, noise


def with_noise(data: Dataset, sigma: float, seed: int, workers: int = 1) -> Dataset:
    """Dataset holding the clean samples of ``data`` and a fresh noise realization."""
    _, noise = add_noise(data.clean, sigma, seed, workers)
    return Dataset(data.clean, noise, sigma, seed, data.kind, dict(data.meta))


def gen_image(shape: Tuple[int, int], seed: int, index: int = 0) -> np.ndarray:
    """
    Piecewise smooth grayscale image in [0, 1]: a shallow gradient background with a few
    rectangles and discs, each carrying its own level and slope.
    """
    rng = sample_rng(seed, index, STREAM_IMAGE)
    d1, d2 = shape
    rows, cols = np.mgrid[0:d1, 0:d2]
    u, v = rows / d1, cols / d2

    slope = rng.uniform(-0.3, 0.3, size=2)
    image = 0.5 + slope[0] * (u - 0.5) + slope[1] * (v - 0.5)

    for _ in range(int(rng.integers(3, 7))):
        level = rng.uniform(0.0, 1.0)
        tilt = rng.uniform(-0.2, 0.2, size=2)
        center = rng.uniform(0.15, 0.85, size=2)
        extent = rng.uniform(0.08, 0.3, size=2)

        if rng.uniform() < 0.5:
            mask = (np.abs(u - center[0]) <= extent[0]) & (
                np.abs(v - center[1]) <= extent[1]
            )
        else:
            mask = (u - center[0]) ** 2 + (v - center[1]) ** 2 <= extent[0] ** 2

        shade = level + tilt[0] * (u - center[0]) + tilt[1] * (v - center[1])
        image = np.where(mask, shade, image)

    return np.clip(image, 0.0, 1.0)


def gen_image_patches(
    count: int,
    patch: int,
    seed: int,
    image_shape: Tuple[int, int] = (64, 64),
    images: int = 8,
    workers: int = 1,
) -> Dataset:
    """Square patches cut at random positions out of synthetic piecewise smooth images."""
    if patch > min(image_shape):
        raise ValidationError(f"Patches of {patch} pixels do not fit in {image_shape}.")

    sources = _generate(images, lambda i: gen_image(image_shape, seed, i), workers)

    def cut(index: int) -> np.ndarray:
        rng = sample_rng(seed, index, STREAM_PATCH)
        source = sources[int(rng.integers(0, images))]
        top = int(rng.integers(0, image_shape[0] - patch + 1))
        left = int(rng.integers(0, image_shape[1] - patch + 1))
        return source[top : top + patch, left : left + patch]

    clean = np.array(_generate(count, cut, workers)).reshape(count, patch, patch)
    return Dataset(clean, np.zeros_like(clean), 0.0, seed, "image_patches")


def psnr_signal(x: np.ndarray, y: np.ndarray) -> float:
    """
    10·log₁₀((max y − min y) / MSE(x, y)) with the range of the reference y left unsquared.
    Identical inputs give +inf.
    >>> psnr_signal(np.array([0.0, 1.0 + 0.1]), np.array([0.0, 1.0])) > 0
    True
    """
    x, y = _paired(x, y)
    mse = float(np.mean((x - y) ** 2))

    if mse == 0.0:
        return float("inf")

    return float(10.0 * np.log10((np.max(y) - np.min(y)) / mse))


def psnr_image(x: np.ndarray, y: np.ndarray) -> float:
    """
    10·log₁₀(1 / MSE(x, y)) for images with values in [0, 1].
    >>> round(psnr_image(np.full((2, 2), 0.1), np.zeros((2, 2))), 10)
    20.0
    """
    x, y = _paired(x, y)
    mse = float(np.mean((x - y) ** 2))

    if mse == 0.0:
        return float("inf")

    return float(10.0 * np.log10(1.0 / mse))


def _paired(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)

    if a.shape != b.shape:
        raise DimensionError(f"Cannot compare shapes {a.shape} and {b.shape}.")

    return a, b


def mean_psnr(
    predictions: np.ndarray, truths: np.ndarray, kind: str = "pwc_1d"
) -> float:
    """Average PSNR over paired samples, using the signal or the image formula."""
    metric = psnr_signal if kind == "pwc_1d" else psnr_image
    values = [metric(p, t) for p, t in zip(predictions, truths)]
    return float(np.mean(values))


@dataclass(frozen=True)
class BlurKernel:
    """Normalized Gaussian kernel k_ij ∝ exp(−(i² + j²)/(2τ²)), i, j ∈ {−4, …, 4}."""

    tau: float
    taps: np.ndarray

    @property
    def radius(self) -> int:
        return (self.taps.shape[0] - 1) // 2


def gauss_kernel(tau: float, radius: int = 4) -> BlurKernel:
    """
    >>> round(float(gauss_kernel(1.5).taps.sum()), 12)
    1.0
    """
    if not np.isfinite(tau) or tau <= 0.0:
        raise ValidationError(f"τ must be positive, got {tau}.")

    offsets = np.arange(-radius, radius + 1)
    i, j = np.meshgrid(offsets, offsets, indexing="ij")
    taps = np.exp(-(i**2 + j**2) / (2.0 * tau**2))

    return BlurKernel(float(tau), taps / taps.sum())


def _kernel_bank(kernel: BlurKernel, shape: Tuple[int, ...]) -> FilterBank:
    return FilterBank(kernel.taps[None, None], shape)


def blur_apply(
    kernel: BlurKernel, image: np.ndarray, boundary: str = "periodic"
) -> np.ndarray:
    """
    Blur an image. ``periodic`` keeps the shape, ``valid`` drops a border of the kernel
    radius on every side.
    """
    image = np.asarray(image, dtype=float)

    if boundary == "periodic":
        return bcirc_apply(_kernel_bank(kernel, image.shape), image[None])[0]

    if boundary == "valid":
        return signal.convolve2d(image, kernel.taps, mode="valid")

    raise ValidationError(f"Unknown boundary '{boundary}', expected one of {BOUNDARIES}.")


def blur_adjoint(
    kernel: BlurKernel, image: np.ndarray, boundary: str = "periodic"
) -> np.ndarray:
    """Adjoint of blur_apply; for ``valid`` the output is larger than the input."""
    image = np.asarray(image, dtype=float)

    if boundary == "periodic":
        return bcirc_apply_adjoint(_kernel_bank(kernel, image.shape), image[None])[0]

    if boundary == "valid":
        return signal.correlate2d(image, kernel.taps, mode="full")

    raise ValidationError(f"Unknown boundary '{boundary}', expected one of {BOUNDARIES}.")


def smooth_oracle(x: np.ndarray, sigma: float = 1.5) -> np.ndarray:
    """Cheap stand-in for an external reference denoiser: a periodic Gaussian filter."""
    return ndimage.gaussian_filter(np.asarray(x, dtype=float), sigma=sigma, mode="wrap")


def write_signals(path: PathLike, signals: np.ndarray) -> None:
    """One signal per CSV row, 17 significant digits so that reading back is lossless."""
    rows = np.atleast_2d(np.asarray(signals, dtype=float))
    np.savetxt(path, rows.reshape(rows.shape[0], -1), fmt="%.17g", delimiter=",")


def read_signals(path: PathLike) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except OSError as e:
        raise ParseError(f"Cannot read signals: {e}", entry=str(path)) from e
    except ValueError as e:
        raise ParseError(f"Malformed CSV: {e}", entry=str(path)) from e


def quantize(image: np.ndarray) -> np.ndarray:
    """
    8-bit levels of an image in [0, 1], rounded to nearest with ties to even.
    >>> quantize(np.array([0.0, 0.5, 1.0])).tolist()
    [0, 128, 255]
    """
    levels = np.rint(np.clip(np.asarray(image, dtype=float), 0.0, 1.0) * 255.0)
    return levels.astype(np.uint8)


def write_pgm(path: PathLike, image: np.ndarray) -> None:
    """Binary 8-bit PGM (P5) holding an image with values in [0, 1]."""
    image = np.asarray(image, dtype=float)

    if image.ndim != 2:
        raise DimensionError(f"PGM images are two dimensional, got shape {image.shape}.")

    Image.fromarray(quantize(image)).save(path, format="PPM")


def _pgm_header(raw: bytes) -> Tuple[int, int, int, int]:
    """Width, height, maxval and the offset of the pixel data."""
    if raw[:2] != b"P5":
        raise ParseError("Not a binary PGM, the magic number must be P5", offset=0)

    values: List[int] = []
    position = 2

    while len(values) < 3:
        start = position

        if position >= len(raw):
            raise ParseError("Truncated PGM header", offset=position)

        if raw[position : position + 1].isspace():
            position += 1
            continue

        if raw[position : position + 1] == b"#":
            end = raw.find(b"\n", position)
            if end < 0:
                raise ParseError("Unterminated comment in PGM header", offset=position)
            position = end + 1
            continue

        while position < len(raw) and raw[position : position + 1].isdigit():
            position += 1

        if position == start:
            raise ParseError("Expected a decimal number in PGM header", offset=start)

        values.append(int(raw[start:position]))

    if position >= len(raw) or not raw[position : position + 1].isspace():
        raise ParseError("Missing separator before PGM pixel data", offset=position)

    width, height, maxval = values

    if maxval != 255:
        raise ParseError(f"Only 8-bit PGM is supported, maxval is {maxval}", offset=position)

    return width, height, maxval, position + 1


def read_pgm(path: PathLike) -> np.ndarray:
    """Image with values in [0, 1] read from a binary 8-bit PGM."""
    try:
        with open(path, "rb") as fp:
            raw = fp.read()
    except OSError as e:
        raise ParseError(f"Cannot read image: {e}", entry=str(path)) from e

    width, height, _, offset = _pgm_header(raw)

    if len(raw) - offset < width * height:
        raise ParseError(
            f"PGM pixel data holds {len(raw) - offset} bytes, expected {width * height}",
            offset=offset,
        )

    with Image.open(path) as image:
        pixels = np.asarray(image, dtype=np.uint8)

    return pixels.astype(float) / 255.0


def save_dataset(directory: PathLike, data: Dataset) -> Dict[str, Any]:
    """
    Write a dataset as CSV files next to a manifest.json describing them. Returns the manifest.
    """
    os.makedirs(directory, exist_ok=True)

    files = {"clean": "clean.csv", "noise": "noise.csv", "noisy": "noisy.csv"}

    write_signals(os.path.join(directory, files["clean"]), data.clean)
    write_signals(os.path.join(directory, files["noise"]), data.noise)
    write_signals(os.path.join(directory, files["noisy"]), data.noisy)

    manifest: Dict[str, Any] = {
        "kind": data.kind,
        "count": data.count,
        "sigma": data.sigma,
        "seed": data.seed,
        "files": files,
    }

    if data.kind == "pwc_1d":
        manifest["m"] = data.shape[0]
    else:
        manifest["d1"], manifest["d2"] = data.shape

    with open(os.path.join(directory, MANIFEST), "w", encoding="utf-8") as fp:
        json.dump(manifest, fp, indent=2)

    return manifest


def load_dataset(directory: PathLike) -> Dataset:
    manifest_path = os.path.join(directory, MANIFEST)

    try:
        with open(manifest_path, "r", encoding="utf-8") as fp:
            manifest = json.load(fp)
    except OSError as e:
        raise ParseError(f"Cannot open the dataset manifest: {e}", entry=MANIFEST) from e
    except json.JSONDecodeError as e:
        raise ParseError(f"Malformed manifest: {e.msg}", offset=e.pos, entry=MANIFEST) from e

    for key in ("kind", "count", "sigma", "seed", "files"):
        if key not in manifest:
            raise ParseError("Manifest is missing a mandatory key", entry=key)

    files = manifest["files"]
    arrays: Dict[str, np.ndarray] = {}

    for role in ("clean", "noise"):
        if role not in files:
            raise ParseError("Manifest does not list a mandatory file", entry=role)

        path = os.path.join(directory, files[role])

        if not os.path.isfile(path):
            raise ParseError("Dataset file is missing", entry=files[role])

        arrays[role] = read_signals(path)

    count = int(manifest["count"])

    if manifest["kind"] == "pwc_1d":
        shape: Tuple[int, ...] = (count, int(manifest["m"]))
    else:
        shape = (count, int(manifest["d1"]), int(manifest["d2"]))

    try:
        clean = arrays["clean"].reshape(shape)
        noise = arrays["noise"].reshape(shape)
    except ValueError as e:
        raise ParseError(f"Dataset files do not match the manifest shape {shape}") from e

    return Dataset(
        clean, noise, float(manifest["sigma"]), int(manifest["seed"]), manifest["kind"]
    )


def load_signal(path: PathLike) -> np.ndarray:
    """A single signal (CSV) or image (PGM), chosen by the file extension."""
    if str(path).lower().endswith(".pgm"):
        return read_pgm(path)

    signals = read_signals(path)
    return signals[0] if signals.shape[0] == 1 else signals


def save_signal(path: PathLike, x: np.ndarray) -> None:
    if str(path).lower().endswith(".pgm"):
        write_pgm(path, x)
    else:
        write_signals(path, x)


def gen_split(
    train: int,
    test: int,
    length: int,
    sigma: float,
    seed: int,
    workers: int = 1,
) -> Tuple[Dataset, Dataset]:
    """
    Noisy piecewise constant train and test sets. The test set is drawn from the seed
    ``seed + 1`` so that the two splits never share a signal or a noise realization.
    """
    splits = []

    for offset, count in enumerate((train, test)):
        clean = gen_pwc(count, length, seed + offset, workers)
        noisy = with_noise(clean, sigma, seed + offset, workers)
        splits.append(
            Dataset(
                noisy.clean, noisy.noise, sigma, seed + offset, "pwc_1d", clean.meta
            )
        )

    return splits[0], splits[1]

"""
sats module for the synthetic watermark laboratory

Two classes of procedurally drawn animals ("horse" 0, "zebra" 1) on sky and
grass, an optional bright square stamped in a corner of some zebras, a
regularized logistic classifier on raw pixels, and a sweep over how many
training zebras carry the square. Saliency of the linear model is exact:
gradient times input is each pixel's share of the logit.
"""

# pylint: disable=too-many-instance-attributes,too-many-locals

import os
import math
import logging
import dataclasses
import concurrent.futures

import numpy as np
import scipy.stats
import scipy.special

import sats.core
import sats.schema
import sats.ingest
import sats.builder
import sats.aggregate

logger = logging.getLogger(__name__)

WATERMARK = "watermark"
METHOD_TAG = "gradient_x_input"

DEFAULT_PREVALENCES = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.5)
DEFAULT_SEED = 20240

# Parts as (first row, last row, first column, last column), exclusive ends,
# on a 32 pixel grid; later parts paint over earlier ones

PARTS = [
    ("sky", 0, 16, 0, 32),
    ("grass", 16, 32, 0, 32),
    ("tail", 13, 19, 7, 9),
    ("body", 13, 21, 9, 22),
    ("legs", 21, 26, 10, 21),
    ("hooves", 26, 28, 10, 21),
    ("mane", 7, 14, 17, 20),
    ("head", 6, 14, 20, 25),
    ("ears", 4, 6, 21, 25),
    ("eyes", 8, 10, 22, 24),
    ("muzzle", 11, 14, 24, 27)
]

BACKGROUND = ["sky", "grass"]

# Horse tone per part, and how much brighter the zebra's is at full contrast.
# Training centres pixels, so a tone both classes share leaves the model alone
# and only scales the part's gradient x input; dark animals keep the body parts
# from outshining a watermark the model leans on

TONES = {
    "sky": 0.35, "grass": 0.30, "tail": 0.20, "body": 0.20, "legs": 0.20, "hooves": 0.20,
    "mane": 0.20, "head": 0.20, "ears": 0.20, "eyes": 0.20, "muzzle": 0.20
}

DELTAS = {
    "sky": 0.0, "grass": 0.004, "tail": 0.012, "body": 0.035, "legs": 0.025, "hooves": 0.008,
    "mane": 0.07, "head": 0.05, "ears": 0.02, "eyes": 0.03, "muzzle": 0.016
}

class SynthError(Exception):
    """
    Synth Error which captures the config or data with the issue
    """

    def __init__(self, subject, message):

        self.subject = subject
        self.message = message
        super().__init__(self.message)

    def __reduce__(self):
        return (self.__class__, (self.subject, self.message))

class BadConfig(SynthError):
    """
    Config outside its allowed ranges
    """

class Divergence(SynthError):
    """
    Training loss kept rising after every step halving
    """

@dataclasses.dataclass(frozen=True)
class SynthConfig:
    """
    Everything the generated dataset depends on
    """

    image_size: int = 32
    n_train: int = 250
    n_test: int = 100
    watermark_prevalence: float = 0.0
    jitter: int = 1
    seed: int = DEFAULT_SEED
    stripe_frequency: float = 0.25
    blob_density: float = 0.02
    texture_amplitude: float = 0.05
    class_contrast: float = 1.0
    tone_noise: float = 0.025
    pixel_noise: float = 0.05
    watermark_size: int = 5
    watermark_value: float = 1.0
    watermark_margin: int = 1
    watermark_test: str = "positive"

    def __post_init__(self):

        problems = []

        if not 0 <= self.watermark_prevalence <= 1:
            problems.append(f"watermark_prevalence {self.watermark_prevalence} not in [0, 1]")

        if self.image_size < 8:
            problems.append(f"image_size {self.image_size} < 8")

        for name in ("n_train", "n_test", "watermark_size"):
            if getattr(self, name) < 1:
                problems.append(f"{name} {getattr(self, name)} < 1")

        for name in ("jitter", "watermark_margin", "blob_density", "texture_amplitude", "class_contrast", "tone_noise", "pixel_noise"):
            if getattr(self, name) < 0:
                problems.append(f"{name} {getattr(self, name)} < 0")

        if self.stripe_frequency <= 0:
            problems.append(f"stripe_frequency {self.stripe_frequency} <= 0")

        if not 0 <= self.watermark_value <= 1:
            problems.append(f"watermark_value {self.watermark_value} not in [0, 1]")

        if self.watermark_margin + 2 * self.jitter + self.watermark_size > self.image_size:
            problems.append("watermark with margin and jitter doesn't fit the image")

        if not 0 <= self.seed < 2 ** 64:
            problems.append(f"seed {self.seed} not a 64-bit unsigned integer")

        if self.watermark_test not in ("positive", "all"):
            problems.append(f"watermark_test {self.watermark_test} not in ['positive', 'all']")

        if problems:
            raise BadConfig(self, "; ".join(problems))

@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """
    Full batch gradient descent settings
    """

    learning_rate: float = 2.0
    l2: float = 0.05
    epochs: int = 300
    tolerance: float = 1e-12
    halvings: int = 10

    def __post_init__(self):

        if self.learning_rate <= 0 or self.l2 < 0 or self.epochs < 0 or self.tolerance < 0 or self.halvings < 0:
            raise BadConfig(self, "learning_rate must be > 0, l2, epochs, tolerance and halvings >= 0")

@dataclasses.dataclass(frozen=True, eq=False)
class SynthSample:
    """
    One generated image with its ground truth parts
    """

    image_id: str
    pixels: np.ndarray
    label: int
    watermark_present: bool
    watermark_mask: np.ndarray
    part_masks: dict

    def __post_init__(self):

        object.__setattr__(self, "pixels", sats.core.frozen(self.pixels, np.float64))
        object.__setattr__(self, "watermark_mask", sats.core.frozen(self.watermark_mask, bool))
        object.__setattr__(self, "part_masks", {name: sats.core.frozen(mask, bool) for name, mask in self.part_masks.items()})

        if bool(self.watermark_mask.any()) != self.watermark_present:
            raise SynthError(self, f"watermark mask of {self.image_id} disagrees with watermark_present")

    @property
    def grid(self):
        """
        Grid of the image
        """
        return sats.core.ImageGrid.of(self.pixels)

    def segmentation(self):
        """
        Ground truth parts as a segmentation map
        """

        return sats.core.SegmentationMap(
            grid=self.grid,
            segments=tuple(sats.core.SegmentMask(name=name, mask=mask) for name, mask in self.part_masks.items()),
            image_id=self.image_id
        )

@dataclasses.dataclass(frozen=True)
class Dataset:
    """
    Training images and two test sets sharing the same base images
    """

    train: tuple
    test_clean: tuple
    test_watermarked: tuple
    config: SynthConfig

@dataclasses.dataclass(frozen=True, eq=False)
class Classifier:
    """
    Linear model on raw pixels, logit = sum(weights * pixels) + bias
    """

    weights: np.ndarray
    bias: float
    losses: tuple = ()

    def __post_init__(self):

        object.__setattr__(self, "weights", sats.core.frozen(self.weights, np.float64))

    def logit(self, pixels):
        """
        Class 1 logit
        """
        return float(np.sum(self.weights * pixels)) + self.bias

    def probability(self, pixels):
        """
        Class 1 probability
        """
        return float(scipy.special.expit(self.logit(pixels)))

    def predict(self, pixels):
        """
        Class 1 when the logit is positive
        """
        return int(self.logit(pixels) > 0)

    def accuracy(self, samples):
        """
        Share of samples predicted right
        """

        samples = list(samples)

        if not samples:
            raise SynthError(samples, "no samples to score")

        return sum(self.predict(sample.pixels) == sample.label for sample in samples) / len(samples)

def scale(value, size):
    """
    32 grid coordinate to one of size
    """

    return math.floor(value * size / 32 + 0.5)

def layout(size):
    """
    Part masks without a watermark, partitioning the grid, empty parts dropped
    """

    labels = np.full((size, size), -1, dtype=int)

    for index, (_, top, bottom, left, right) in enumerate(PARTS):
        labels[scale(top, size):scale(bottom, size), scale(left, size):scale(right, size)] = index

    return {name: labels == index for index, (name, *_) in enumerate(PARTS) if (labels == index).any()}

def texture(rng, label, config):
    """
    Stripes for zebras, blobs for horses, over the whole grid
    """

    size = config.image_size
    rows, columns = np.mgrid[0:size, 0:size]

    if label == 1:
        phase = rng.uniform(0, 1 / config.stripe_frequency)
        return np.sign(np.sin(2 * np.pi * config.stripe_frequency * (columns + rows * 0.5 + phase)))

    count = max(1, round(config.blob_density * size * size))
    centres = rng.uniform(0, size, size=(count, 2))

    blobs = np.zeros((size, size))

    for row, column in centres:
        blobs += np.exp(-((rows - row) ** 2 + (columns - column) ** 2) / (2 * 1.5 ** 2))

    return blobs

def paint(rng, label, config, parts):
    """
    Base image of a class, no watermark
    """

    pixels = np.zeros((config.image_size, config.image_size))

    pattern = texture(rng, label, config)

    for name, mask in parts.items():

        tone = TONES[name] + (DELTAS[name] * config.class_contrast if label == 1 else 0.0) + rng.normal(0, config.tone_noise)

        pixels[mask] = tone

        if name not in BACKGROUND:
            pixels[mask] += config.texture_amplitude * (pattern[mask] - pattern[mask].mean())

    pixels += rng.normal(0, config.pixel_noise, size=pixels.shape)

    return np.clip(pixels, 0.0, 1.0)

def placement(rng, config):
    """
    Top left corner of a watermark: a random corner, jittered
    """

    corner = int(rng.integers(4))
    offsets = rng.integers(-config.jitter, config.jitter + 1, size=2)

    near = config.watermark_margin + config.jitter
    far = config.image_size - config.watermark_margin - config.jitter - config.watermark_size

    row = (near if corner < 2 else far) + int(offsets[0])
    column = (near if corner % 2 == 0 else far) + int(offsets[1])

    return row, column

def stamp(image_id, pixels, label, parts, config, where=None):
    """
    A sample, with the watermark stamped at where if given
    """

    pixels = np.array(pixels)
    watermark = np.zeros(pixels.shape, dtype=bool)

    if where is not None:
        row, column = where
        watermark[row:row + config.watermark_size, column:column + config.watermark_size] = True
        pixels[watermark] = config.watermark_value

    masks = {}

    for name, mask in parts.items():
        mask = mask & ~watermark
        if mask.any():
            masks[name] = mask

    if where is not None:
        masks[WATERMARK] = watermark

    return SynthSample(
        image_id=image_id,
        pixels=pixels,
        label=label,
        watermark_present=where is not None,
        watermark_mask=watermark,
        part_masks=masks
    )

def generate_dataset(config):
    """
    Deterministic dataset for a config

    Base images and watermark placements come from seed streams that don't
    depend on prevalence, and the marked training zebras at a prevalence are
    the first floor(prevalence * n_train) of a fixed order, so datasets at
    different prevalences differ only in which zebras are marked.
    """

    if not isinstance(config, SynthConfig):
        raise BadConfig(config, "config must be a SynthConfig")

    parts = layout(config.image_size)

    streams = np.random.SeedSequence(config.seed).spawn(5)
    painters = {"train": np.random.default_rng(streams[0]), "test": np.random.default_rng(streams[1])}
    placers = {"train": np.random.default_rng(streams[2]), "test": np.random.default_rng(streams[3])}
    chooser = np.random.default_rng(streams[4])

    marked = set(chooser.permutation(config.n_train)[:math.floor(config.watermark_prevalence * config.n_train)].tolist())

    train = []
    test_clean = []
    test_watermarked = []

    for label in (0, 1):

        for index in range(config.n_train):
            pixels = paint(painters["train"], label, config, parts)
            where = placement(placers["train"], config)
            chosen = label == 1 and index in marked
            train.append(stamp(f"train-{label}-{index:04d}", pixels, label, parts, config, where if chosen else None))

        for index in range(config.n_test):
            pixels = paint(painters["test"], label, config, parts)
            where = placement(placers["test"], config)
            chosen = label == 1 or config.watermark_test == "all"
            test_clean.append(stamp(f"test-{label}-{index:04d}", pixels, label, parts, config))
            test_watermarked.append(stamp(f"test-{label}-{index:04d}", pixels, label, parts, config, where if chosen else None))

    logger.info("generated %d training images, %d watermarked", len(train), len(marked))

    return Dataset(train=tuple(train), test_clean=tuple(test_clean), test_watermarked=tuple(test_watermarked), config=config)

def loss(features, labels, weights, bias, l2):
    """
    Mean logistic loss plus L2 on the weights
    """

    logits = features @ weights + bias

    return float(np.mean(np.logaddexp(0.0, logits) - labels * logits)) + 0.5 * l2 * float(weights @ weights)

def train_classifier(train, hyper=None):
    """
    Full batch gradient descent from zero on centred pixels

    A step that raises the loss by more than the tolerance is halved and
    retried, up to hyper.halvings times. Centring is folded into the bias,
    so the returned model works on raw pixels.
    """

    hyper = hyper or TrainConfig()

    train = list(train)

    if not train:
        raise SynthError(train, "no training samples")

    shape = train[0].pixels.shape
    features = np.stack([sample.pixels.ravel() for sample in train])
    labels = np.array([sample.label for sample in train], dtype=np.float64)

    centre = features.mean(axis=0)
    features = features - centre

    weights = np.zeros(features.shape[1])
    bias = 0.0
    step = hyper.learning_rate

    current = loss(features, labels, weights, bias, hyper.l2)
    losses = [current]

    for epoch in range(hyper.epochs):

        errors = scipy.special.expit(features @ weights + bias) - labels

        gradient = features.T @ errors / len(train) + hyper.l2 * weights
        slope = float(np.mean(errors))

        for halving in range(hyper.halvings + 1):

            proposed = weights - step * gradient, bias - step * slope
            attempt = loss(features, labels, *proposed, hyper.l2)

            if attempt <= current + hyper.tolerance:
                break

            if halving == hyper.halvings:
                raise Divergence(hyper, f"loss rose from {current} to {attempt} at epoch {epoch} after {halving} halvings")

            step /= 2
            logger.warning("loss rose at epoch %d, halving step to %g", epoch, step)

        weights, bias = proposed
        current = attempt
        losses.append(current)

    return Classifier(weights=weights.reshape(shape), bias=bias - float(weights @ centre), losses=tuple(losses))

def saliency_gradient_x_input(model, sample):
    """
    Each pixel's contribution w_p * x_p to the class 1 logit
    """

    pixels = getattr(sample, "pixels", sample)

    return sats.core.SaliencyMap(
        grid=sats.core.ImageGrid.of(pixels),
        values=model.weights * pixels,
        method_tag=METHOD_TAG
    )

def build_sats(model, samples):
    """
    SATs of samples over their ground truth parts, masks unpadded
    """

    return [
        sats.builder.build_sat(saliency_gradient_x_input(model, sample), sample.segmentation(), pad_radius=0)
        for sample in samples
    ]

class SweepSchema(sats.schema.Schema):
    """
    Sweep CSV columns, in order
    """

    prevalence = float, False
    watermark_mean_rank = float
    acc_clean = float, False
    acc_watermarked = float, False
    seed = int, False

@dataclasses.dataclass(frozen=True)
class SweepPoint:
    """
    Results at one prevalence
    """

    prevalence: float
    watermark_mean_rank: float
    acc_clean: float
    acc_watermarked: float
    seed: int
    aggregate: sats.core.AggregateSat = None

@dataclasses.dataclass(frozen=True)
class SweepReport:
    """
    Results over a grid of prevalences
    """

    points: tuple
    config: SynthConfig

    def rows(self):
        """
        Sweep CSV rows
        """

        return [
            {name: getattr(point, name) for name in SweepSchema.columns()}
            for point in self.points
        ]

def sweep_point(config, hyper=None):
    """
    Trains at one config and measures the watermark's rank and accuracies
    """

    dataset = generate_dataset(config)
    model = train_classifier(dataset.train, hyper)

    aggregated = sats.aggregate.aggregate_relative(build_sats(model, dataset.test_watermarked))

    row = aggregated.row(WATERMARK)

    point = SweepPoint(
        prevalence=config.watermark_prevalence,
        watermark_mean_rank=row.relative_mean_rank if row else None,
        acc_clean=model.accuracy(dataset.test_clean),
        acc_watermarked=model.accuracy(dataset.test_watermarked),
        seed=config.seed,
        aggregate=aggregated
    )

    logger.info(
        "prevalence %g: watermark rank %s, clean %.3f, watermarked %.3f",
        point.prevalence, point.watermark_mean_rank, point.acc_clean, point.acc_watermarked
    )

    return point

def run_prevalence_sweep(base_config, prevalences=DEFAULT_PREVALENCES, hyper=None, jobs=1):
    """
    One sweep point per prevalence, same base images throughout
    """

    prevalences = [float(prevalence) for prevalence in prevalences]

    if not prevalences:
        raise BadConfig(prevalences, "no prevalences to sweep")

    if prevalences != sorted(prevalences) or not all(0 <= prevalence <= 1 for prevalence in prevalences):
        raise BadConfig(prevalences, "prevalences must be ascending and in [0, 1]")

    configs = [dataclasses.replace(base_config, watermark_prevalence=prevalence) for prevalence in prevalences]

    if jobs > 1 and len(configs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as executor:
            points = list(executor.map(sweep_point, configs, [hyper] * len(configs)))
    else:
        points = [sweep_point(config, hyper) for config in configs]

    return SweepReport(points=tuple(points), config=base_config)

def collapse_config(base_config):
    """
    No real class signal and half the zebras marked, where the model can
    only learn the watermark
    """

    return dataclasses.replace(base_config, class_contrast=0.0, watermark_prevalence=0.5)

def sweep_trend(report):
    """
    Spearman correlation of prevalence with the negated watermark rank
    """

    points = [point for point in report.points if point.watermark_mean_rank is not None]

    if len(points) < 2 or len({point.watermark_mean_rank for point in points}) < 2:
        return float("nan")

    rho, _ = scipy.stats.spearmanr(
        [point.prevalence for point in points],
        [-point.watermark_mean_rank for point in points]
    )

    return float(rho)

def write_sweep_csv(report, path):
    """
    Writes the sweep CSV
    """

    sats.aggregate.write_rows(path, SweepSchema, report.rows())

def dump_corpus(samples, model, out_dir, encoding="rle", class_labels=True):
    """
    Writes samples in the ingest formats: NPY saliency, segmentation JSON
    and a manifest, returning the manifest path
    """

    os.makedirs(out_dir, exist_ok=True)

    entries = []

    for sample in samples:

        saliency = saliency_gradient_x_input(model, sample)

        saliency_path = f"{sample.image_id}.npy"
        segmentation_path = f"{sample.image_id}.json"

        sats.ingest.write_saliency(os.path.join(out_dir, saliency_path), saliency)
        sats.ingest.write_segmentation(os.path.join(out_dir, segmentation_path), sample.segmentation(), encoding=encoding)

        entries.append({
            "image_id": sample.image_id,
            "class_label": str(sample.label) if class_labels else "all",
            "saliency_path": saliency_path,
            "segmentation_path": segmentation_path,
            "method_tag": METHOD_TAG
        })

    path = os.path.join(out_dir, "manifest.json")

    sats.ingest.write_manifest(path, entries)

    logger.info("dumped %d samples to %s", len(entries), out_dir)

    return path

"""
sats module for reading and writing corpora: manifests, saliency arrays,
segmentations and SAT tables
"""

# pylint: disable=too-many-branches

import os
import csv
import json
import logging
import dataclasses

import numpy as np
import scipy.ndimage
import PIL.Image

import sats
import sats.core
import sats.field
import sats.schema

logger = logging.getLogger(__name__)

class IngestError(Exception):
    """
    Ingest Error which captures the path with the issue
    """

    def __init__(self, path, message):

        self.path = path
        self.message = message
        super().__init__(self.message)

    def __reduce__(self):
        """
        Rebuild from path and message when crossing processes
        """
        return (self.__class__, (self.path, self.message))

    def __str__(self):
        """
        Mention the path if there is one
        """
        return f"{self.path}: {self.message}" if self.path is not None else self.message

class MissingFile(IngestError):
    """
    Path doesn't exist
    """

class IoError(IngestError):
    """
    Path couldn't be read or written
    """

class SchemaViolation(IngestError):
    """
    Document doesn't match its schema
    """

class DuplicateImageId(IngestError):
    """
    Manifest lists an (image_id, method_tag) twice
    """

class ShapeMismatch(IngestError):
    """
    Saliency array doesn't match the grid
    """

class NonFiniteValue(IngestError):
    """
    Saliency array has a NaN or Inf
    """

    def __init__(self, path, message, coordinate):

        self.coordinate = coordinate
        super().__init__(path, message)

    def __reduce__(self):
        return (self.__class__, (self.path, self.message, self.coordinate))

class UnsupportedDtype(IngestError):
    """
    Saliency array isn't a little endian float
    """

class BadRle(IngestError):
    """
    RLE text doesn't parse or doesn't cover the grid
    """

class MaskShapeMismatch(IngestError):
    """
    PNG mask doesn't match the grid
    """

class NoSegments(IngestError):
    """
    Nothing left in a segmentation after decoding
    """

class ManifestSchema(sats.schema.Schema):
    """
    One entry of a corpus manifest
    """

    image_id = str, False
    class_label = str, False
    saliency_path = str, False
    segmentation_path = str, False
    method_tag = str, False

    UNIQUE = ["image_id", "method_tag"]

@dataclasses.dataclass(frozen=True)
class ManifestEntry:
    """
    Where to find one image's saliency and segmentation
    """

    image_id: str
    class_label: str
    saliency_path: str
    segmentation_path: str
    method_tag: str

@dataclasses.dataclass(frozen=True)
class CorpusManifest:
    """
    Validated manifest, paths resolved
    """

    entries: tuple
    path: str = None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def labels(self):
        """
        Class label by image_id
        """
        return {entry.image_id: entry.class_label for entry in self.entries}

def read_json(path):
    """
    Loads a JSON document, translating failures
    """

    if not os.path.exists(path):
        raise MissingFile(path, "no such file")

    try:
        with open(path, "r", encoding="utf-8") as file:
            return json.load(file)
    except json.JSONDecodeError as exception:
        raise SchemaViolation(path, f"invalid JSON: {exception.msg} at line {exception.lineno}")
    except OSError as exception:
        raise IoError(path, exception.strerror or str(exception))

def write_json(path, document):
    """
    Writes a JSON document deterministically
    """

    try:
        with open(path, "w", encoding="utf-8") as file:
            json.dump(document, file, indent=2, sort_keys=True)
            file.write("\n")
    except OSError as exception:
        raise IoError(path, exception.strerror or str(exception))

def load_manifest(path):
    """
    Reads and validates a corpus manifest, resolving relative paths
    against the manifest's directory
    """

    document = read_json(path)

    if not isinstance(document, dict) or not isinstance(document.get("entries"), list):
        raise SchemaViolation(path, "manifest must be an object with an 'entries' list")

    base = os.path.dirname(os.path.abspath(path))

    entries = []
    keys = set()

    for index, entry in enumerate(document["entries"]):

        if not isinstance(entry, dict):
            raise SchemaViolation(path, f"entry {index} is not an object")

        values = {}

        for field in ManifestSchema.record()._order:
            try:
                values[field.name] = field.read(entry)
            except sats.field.FieldError as exception:
                raise SchemaViolation(path, f"entry {index} field {field.name}: {exception.message}")

        key = ManifestSchema.key(values)

        if key in keys:
            raise DuplicateImageId(path, f"entry {index} repeats image_id {key[0]} for method_tag {key[1]}")

        keys.add(key)

        for name in ("saliency_path", "segmentation_path"):
            values[name] = os.path.normpath(os.path.join(base, values[name]))

        entries.append(ManifestEntry(**values))

    logger.info("loaded %d manifest entries from %s", len(entries), path)

    return CorpusManifest(entries=tuple(entries), path=path)

def write_manifest(path, entries):
    """
    Writes manifest entries, paths as given
    """

    record = ManifestSchema.record()

    write_json(path, {
        "entries": [
            record.read(dataclasses.asdict(entry) if dataclasses.is_dataclass(entry) else entry)
            for entry in entries
        ]
    })

def read_saliency(path, grid=None, method_tag="unknown"):
    """
    Reads a 2-D little endian float NPY array as a SaliencyMap
    """

    if not os.path.exists(path):
        raise MissingFile(path, "no such file")

    try:
        values = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exception:
        raise IoError(path, f"not a readable NPY array: {exception}")

    if not isinstance(values, np.ndarray) or values.dtype.kind != "f" or values.dtype.byteorder == ">":
        raise UnsupportedDtype(path, f"expected little endian float, got {getattr(values, 'dtype', type(values))}")

    if values.ndim != 2:
        raise ShapeMismatch(path, f"expected a 2-D array, got shape {values.shape}")

    if grid is None:
        grid = sats.core.ImageGrid.of(values)

    if values.shape != grid.shape:
        raise ShapeMismatch(path, f"array shape {values.shape} != grid {grid.shape}")

    finite = np.isfinite(values)

    if not finite.all():
        coordinate = tuple(int(index) for index in np.argwhere(~finite)[0])
        raise NonFiniteValue(path, f"non-finite value {values[coordinate]} at {coordinate}", coordinate)

    return sats.core.SaliencyMap(grid=grid, values=values.astype(np.float64), method_tag=method_tag)

def write_saliency(path, saliency):
    """
    Writes a SaliencyMap as little endian float64 NPY
    """

    try:
        with open(path, "wb") as file:
            np.save(file, np.asarray(saliency.values, dtype="<f8"), allow_pickle=False)
    except OSError as exception:
        raise IoError(path, exception.strerror or str(exception))

def encode_rle(mask):
    """
    Row major "value:count" runs of a boolean mask
    """

    flat = np.asarray(mask, dtype=bool).ravel().astype(np.int8)

    if not flat.size:
        return ""

    changes = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], changes))
    ends = np.concatenate((changes, [flat.size]))

    return ",".join(f"{flat[start]}:{end - start}" for start, end in zip(starts, ends))

def decode_rle(text, grid, path=None):
    """
    Boolean mask from "value:count" runs, which must cover grid exactly
    """

    if not isinstance(text, str):
        raise BadRle(path, f"RLE must be text, got {type(text).__name__}")

    values = []
    counts = []

    for run in filter(None, (run.strip() for run in text.split(","))):

        value, _, count = run.partition(":")

        if value not in ("0", "1") or not (count.isascii() and count.isdigit()):
            raise BadRle(path, f"bad run {run!r}")

        values.append(int(value))
        counts.append(int(count))

    total = sum(counts)

    if total != grid.width * grid.height:
        raise BadRle(path, f"RLE covers {total} pixels, grid has {grid.width * grid.height}")

    return np.repeat(np.array(values, dtype=bool), counts).reshape(grid.shape)

def read_png_mask(path, grid):
    """
    Boolean mask from an 8-bit grayscale PNG, nonzero being a member
    """

    if not os.path.exists(path):
        raise MissingFile(path, "no such file")

    try:
        with PIL.Image.open(path) as image:
            if image.mode not in ("L", "1"):
                raise IoError(path, f"expected 8-bit grayscale, got mode {image.mode}")
            mask = np.asarray(image.convert("L")) != 0
    except (OSError, PIL.UnidentifiedImageError) as exception:
        raise IoError(path, f"not a readable PNG: {exception}")

    if mask.shape != grid.shape:
        raise MaskShapeMismatch(path, f"mask shape {mask.shape} != grid {grid.shape}")

    return mask

def write_png_mask(path, mask):
    """
    Writes a boolean mask as an 8-bit grayscale PNG, members 255
    """

    try:
        PIL.Image.fromarray(np.asarray(mask, dtype=bool).astype(np.uint8) * 255).save(path, format="PNG")
    except OSError as exception:
        raise IoError(path, exception.strerror or str(exception))

def read_segmentation(path, image_id=None):
    """
    Reads a segmentation document

    Duplicate names are unioned and masks empty after decoding are dropped
    with a warning.
    """

    document = read_json(path)

    if not isinstance(document, dict) or not isinstance(document.get("segments"), list):
        raise SchemaViolation(path, "segmentation must be an object with a 'segments' list")

    try:
        grid = sats.core.ImageGrid(width=document.get("width"), height=document.get("height"))
    except sats.core.CoreError as exception:
        raise SchemaViolation(path, exception.message)

    image_id = image_id or document.get("image_id") or os.path.splitext(os.path.basename(path))[0]

    base = os.path.dirname(os.path.abspath(path))

    masks = {}

    for index, segment in enumerate(document["segments"]):

        if not isinstance(segment, dict) or not isinstance(segment.get("name"), str) or not segment["name"]:
            raise SchemaViolation(path, f"segment {index} needs a non-empty name")

        keys = [key for key in segment if key != "name"]

        if len(keys) != 1 or sats.source(keys[0]) is None:
            raise SchemaViolation(path, f"segment {index} needs exactly one of {sorted(sats.SOURCES)}")

        mask = sats.source(keys[0]).decode(segment[keys[0]], grid, base=base)

        name = segment["name"]

        if name in masks:
            masks[name] = masks[name] | mask
        else:
            masks[name] = mask

    segments = []

    for name, mask in masks.items():

        if not mask.any():
            logger.warning("%s: dropping empty mask for segment %s", path, name)
            continue

        segments.append(sats.core.SegmentMask(name=name, mask=mask))

    if not segments:
        raise NoSegments(path, "no non-empty segments")

    return sats.core.SegmentationMap(grid=grid, segments=tuple(segments), image_id=image_id)

def write_segmentation(path, segmentation, encoding="rle"):
    """
    Writes a segmentation document, PNG masks land next to it
    """

    coder = sats.source(encoding)

    if coder is None:
        raise IngestError(path, f"unknown mask encoding {encoding}")

    base = os.path.dirname(os.path.abspath(path))
    stem = os.path.splitext(os.path.basename(path))[0]

    write_json(path, {
        "image_id": segmentation.image_id,
        "height": segmentation.grid.height,
        "width": segmentation.grid.width,
        "segments": [
            {
                "name": segment.name,
                encoding: coder.encode(segment.mask, base=base, label=f"{stem}_{index}")
            }
            for index, segment in enumerate(segmentation.segments)
        ]
    })

def pad_mask(mask, radius):
    """
    Dilates a mask with a square of side 2 * radius + 1, clipped at the borders
    """

    if radius < 0:
        raise IngestError(None, f"pad radius {radius} < 0")

    mask = np.array(mask, dtype=bool)

    if radius == 0 or not mask.any():
        return mask

    return scipy.ndimage.binary_dilation(mask, structure=np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool))

def write_sat_csv(sats_list, path):
    """
    Writes SATs as one CSV row per SatRow
    """

    record = sats.core.SatSchema.record()

    try:
        with open(path, "w", encoding="utf-8", newline="") as file:
            writer = csv.DictWriter(file, fieldnames=list(record), lineterminator="\n")
            writer.writeheader()
            for values in sats.core.sat_rows(sats_list):
                writer.writerow(record.write(values))
    except OSError as exception:
        raise IoError(path, exception.strerror or str(exception))

def read_csv(path, schema):
    """
    Reads CSV rows typed by a schema, warning about extra columns
    """

    if not os.path.exists(path):
        raise MissingFile(path, "no such file")

    record = schema.record()

    try:
        with open(path, "r", encoding="utf-8", newline="") as file:

            reader = csv.DictReader(file)

            header = reader.fieldnames or []

            missing = [name for name in record if name not in header]

            if missing:
                raise SchemaViolation(path, f"missing columns {missing}")

            extra = [name for name in header if name not in record]

            if extra:
                logger.warning("%s: ignoring unknown columns %s", path, extra)

            rows = []

            for number, row in enumerate(reader, start=2):
                try:
                    rows.append(record.read(row))
                except sats.field.FieldError as exception:
                    raise SchemaViolation(path, f"line {number}: {exception.message}")

    except OSError as exception:
        raise IoError(path, exception.strerror or str(exception))
    except csv.Error as exception:
        raise SchemaViolation(path, f"bad CSV: {exception}")

    return rows

def read_sat_csv(path):
    """
    Reads SATs back, grouped by (image_id, method_tag) in file order
    """

    grouped = {}

    for values in read_csv(path, sats.core.SatSchema):
        grouped.setdefault((values["image_id"], values["method_tag"]), []).append(values)

    result = []

    for (image_id, method_tag), rows in grouped.items():
        try:
            result.append(sats.core.Sat(
                rows=tuple(sats.core.SatRow(**values) for values in rows),
                image_id=image_id,
                method_tag=method_tag
            ))
        except sats.core.CoreError as exception:
            raise SchemaViolation(path, f"image {image_id}: {exception.message}")

    return result

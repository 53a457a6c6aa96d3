"""Domain tensors and their bit-exact binary file formats.

Every tensor file uses the same little-endian layout: a 4-byte magic
string, a u32 format version, the u32 dimensions, then the raw payload.

========  =======  ==================  =======================
magic     dims     payload             wrapper type
========  =======  ==================  =======================
``SOFT``  H, W, q  H*W*q f32           :class:`SoftmaxMap`
``LABL``  H, W, q  H*W   i32           :class:`LabelMap`
``HEAT``  H, W     H*W   f32           :class:`HeatMap`
``FEAT``  H, W, d  H*W*d f32           :class:`FeatureMap`
========  =======  ==================  =======================

Dataset manifests are JSON files listing (features, softmax, labels)
file triples per image; see :class:`DatasetManifest`.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
PROB_FLOOR = 1e-12
SUM_TOL = 1e-4
IGNORE_LABEL = -1

MANIFEST_ROLES = ("in-train", "out-proxy", "ood-test", "in-val")


class FormatError(ValueError):
    """Malformed file or a tensor violating its invariants."""


class SoftmaxMap:
    """Per-pixel class probabilities, shape (H, W, q), float32.

    Values are clamped to ``[PROB_FLOOR, 1]`` on construction so logarithms
    stay finite downstream; each pixel's channel sum must lie within
    ``SUM_TOL`` of one. Instances are immutable.
    """

    def __init__(self, values):
        values = np.ascontiguousarray(values, dtype=np.float32)
        if values.ndim != 3:
            raise FormatError(f"softmax tensor must be (H, W, q), got shape {values.shape}")
        h, w, q = values.shape
        if h < 1 or w < 1:
            raise FormatError("softmax tensor needs at least one pixel")
        if q < 2:
            raise FormatError(f"softmax tensor needs q >= 2 classes, got q={q}")
        if not np.all(np.isfinite(values)):
            raise FormatError("softmax tensor contains non-finite values")
        sums = values.astype(np.float64).sum(axis=2)
        worst = float(np.max(np.abs(sums - 1.0)))
        if worst > SUM_TOL:
            raise FormatError(
                f"per-pixel channel sums deviate from 1.0 by {worst:.3e} (tolerance {SUM_TOL})"
            )
        values = np.clip(values, PROB_FLOOR, 1.0)
        values.setflags(write=False)
        self.values = values

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def num_classes(self):
        return self.values.shape[2]

    def rows(self):
        """The probabilities flattened to (H*W, q) in raster order."""
        return self.values.reshape(-1, self.values.shape[2])


class LabelMap:
    """Ground-truth labels, shape (H, W), int32.

    Values ``0..q-1`` are in-distribution classes, ``q`` marks
    out-of-distribution pixels and ``IGNORE_LABEL`` (-1) marks pixels
    excluded from all evaluation.
    """

    def __init__(self, labels, num_classes):
        labels = np.ascontiguousarray(labels, dtype=np.int32)
        if labels.ndim != 2:
            raise FormatError(f"label map must be (H, W), got shape {labels.shape}")
        if labels.shape[0] < 1 or labels.shape[1] < 1:
            raise FormatError("label map needs at least one pixel")
        num_classes = int(num_classes)
        if num_classes < 2:
            raise FormatError(f"label map needs q >= 2 classes, got q={num_classes}")
        bad = (labels < IGNORE_LABEL) | (labels > num_classes)
        if bad.any():
            value = int(labels[bad][0])
            raise FormatError(
                f"illegal label value {value}; legal values are -1 and 0..{num_classes}"
            )
        labels.setflags(write=False)
        self.labels = labels
        self.num_classes = num_classes

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def ood_label(self):
        """The label value marking ground-truth out-of-distribution pixels."""
        return self.num_classes


class HeatMap:
    """Per-pixel scores in [0, 1], shape (H, W), float32."""

    def __init__(self, values):
        values = np.ascontiguousarray(values, dtype=np.float32)
        if values.ndim != 2:
            raise FormatError(f"heat map must be (H, W), got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise FormatError("heat map contains non-finite values")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise FormatError("heat map values must lie in [0, 1]")
        values.setflags(write=False)
        self.values = values

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


class FeatureMap:
    """Per-pixel real-valued input features, shape (H, W, d), float32."""

    def __init__(self, values):
        values = np.ascontiguousarray(values, dtype=np.float32)
        if values.ndim != 3:
            raise FormatError(f"feature map must be (H, W, d), got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise FormatError("feature map contains non-finite values")
        values.setflags(write=False)
        self.values = values

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def num_features(self):
        return self.values.shape[2]

    def rows(self):
        return self.values.reshape(-1, self.values.shape[2])


def validate_pair(softmax, labels):
    """Check that a softmax map and a label map describe the same image."""
    if (labels.height, labels.width) != (softmax.height, softmax.width):
        raise FormatError(
            f"dimension mismatch: softmax {softmax.height}x{softmax.width} "
            f"vs labels {labels.height}x{labels.width}"
        )
    if labels.num_classes != softmax.num_classes:
        raise FormatError(
            f"class-count mismatch: softmax q={softmax.num_classes} "
            f"vs labels q={labels.num_classes}"
        )


# ---------------------------------------------------------------------------
# binary IO

_MAGIC_SOFT = b"SOFT"
_MAGIC_LABL = b"LABL"
_MAGIC_HEAT = b"HEAT"
_MAGIC_FEAT = b"FEAT"


def _read_header(f, magic, n_dims, path):
    head = f.read(4)
    if head != magic:
        raise FormatError(f"{path}: bad magic {head!r}, expected {magic!r}")
    raw = f.read(4 * (1 + n_dims))
    if len(raw) != 4 * (1 + n_dims):
        raise FormatError(f"{path}: truncated header")
    fields = struct.unpack("<" + "I" * (1 + n_dims), raw)
    if fields[0] != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {fields[0]}")
    return fields[1:]


def _read_payload(f, count, dtype, path):
    payload = f.read()
    expected = count * 4
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, header declares {expected}"
        )
    return np.frombuffer(payload, dtype=dtype)


def _write(path, magic, dims, array, dtype):
    path = Path(path)
    header = magic + struct.pack("<" + "I" * (1 + len(dims)), FORMAT_VERSION, *dims)
    path.write_bytes(header + np.ascontiguousarray(array, dtype=dtype).tobytes())


def load_softmax(path):
    with open(path, "rb") as f:
        h, w, q = _read_header(f, _MAGIC_SOFT, 3, path)
        values = _read_payload(f, h * w * q, "<f4", path)
    return SoftmaxMap(values.reshape(h, w, q))


def store_softmax(softmax, path):
    _write(path, _MAGIC_SOFT, softmax.values.shape, softmax.values, "<f4")


def load_labels(path):
    with open(path, "rb") as f:
        h, w, q = _read_header(f, _MAGIC_LABL, 3, path)
        labels = _read_payload(f, h * w, "<i4", path)
    return LabelMap(labels.reshape(h, w), q)


def store_labels(labels, path):
    dims = (labels.height, labels.width, labels.num_classes)
    _write(path, _MAGIC_LABL, dims, labels.labels, "<i4")


def load_heatmap(path):
    with open(path, "rb") as f:
        h, w = _read_header(f, _MAGIC_HEAT, 2, path)
        values = _read_payload(f, h * w, "<f4", path)
    return HeatMap(values.reshape(h, w))


def store_heatmap(heat, path):
    _write(path, _MAGIC_HEAT, heat.values.shape, heat.values, "<f4")


def load_features(path):
    with open(path, "rb") as f:
        h, w, d = _read_header(f, _MAGIC_FEAT, 3, path)
        values = _read_payload(f, h * w * d, "<f4", path)
    return FeatureMap(values.reshape(h, w, d))


def store_features(features, path):
    _write(path, _MAGIC_FEAT, features.values.shape, features.values, "<f4")


# ---------------------------------------------------------------------------
# dataset manifests

@dataclass
class ManifestEntry:
    """One image of a dataset; paths are absolute after loading."""

    image_id: str
    labels: str
    softmax: str = ""
    features: str = ""


@dataclass
class DatasetManifest:
    num_classes: int
    role: str
    entries: list = field(default_factory=list)

    def __post_init__(self):
        if self.role not in MANIFEST_ROLES:
            raise FormatError(f"unknown manifest role {self.role!r}; legal: {MANIFEST_ROLES}")


def _peek_class_count(path):
    """Read q from a SOFT or LABL header without loading the payload."""
    with open(path, "rb") as f:
        magic = f.read(4)
        raw = f.read(16)
        if magic not in (_MAGIC_SOFT, _MAGIC_LABL) or len(raw) != 16:
            raise FormatError(f"{path}: not a softmax or label file")
        _, _, _, q = struct.unpack("<IIII", raw)
    return q


def load_manifest(path, validate=True):
    """Load a manifest, resolving entry paths relative to its location."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("num_classes", "role", "entries"):
        if key not in doc:
            raise FormatError(f"{path}: manifest is missing {key!r}")
    base = path.parent

    def resolve(p):
        if not p:
            return ""
        candidate = Path(p)
        return str(candidate if candidate.is_absolute() else base / candidate)

    entries = [
        ManifestEntry(
            image_id=str(e["image_id"]),
            labels=resolve(e.get("labels", "")),
            softmax=resolve(e.get("softmax", "")),
            features=resolve(e.get("features", "")),
        )
        for e in doc["entries"]
    ]
    manifest = DatasetManifest(int(doc["num_classes"]), str(doc["role"]), entries)
    if validate:
        for entry in manifest.entries:
            for p in (entry.labels, entry.softmax, entry.features):
                if p and not Path(p).exists():
                    raise FormatError(f"{path}: referenced file does not exist: {p}")
            for p in (entry.labels, entry.softmax):
                if p and _peek_class_count(p) != manifest.num_classes:
                    raise FormatError(
                        f"{path}: {p} declares q={_peek_class_count(p)}, "
                        f"manifest says q={manifest.num_classes}"
                    )
    return manifest


def store_manifest(manifest, path):
    """Write a manifest; paths under the manifest directory become relative."""
    path = Path(path)
    base = path.parent.resolve()

    def relativize(p):
        if not p:
            return ""
        try:
            return Path(p).resolve().relative_to(base).as_posix()
        except ValueError:
            return str(p)

    doc = {
        "num_classes": manifest.num_classes,
        "role": manifest.role,
        "entries": [
            {
                "image_id": e.image_id,
                "labels": relativize(e.labels),
                "softmax": relativize(e.softmax),
                "features": relativize(e.features),
            }
            for e in manifest.entries
        ],
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

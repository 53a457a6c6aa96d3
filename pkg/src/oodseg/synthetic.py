"""Synthetic scenes for the desk-scale pipeline benchmark.

Each scene is a feature map plus labels. Pixels carry d-dimensional
features drawn from per-class Gaussians arranged as geometric blobs on a
background class, then box-blurred so class boundaries contain genuinely
ambiguous pixels (the main source of false OoD predictions, as in real
segmentation).

Three feature families exist: the in-distribution classes live on a small
circle in the first two feature dimensions, while the proxy and test
out-of-distribution families sit on two larger circles at interleaved,
non-overlapping angles. Proxy scenes (training-time OoD stand-in) and
test scenes therefore share no distribution component, which is checked
structurally at generation time: learned uncertainty has to generalize
to genuinely unseen feature directions.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .formats import (DatasetManifest, FeatureMap, LabelMap, ManifestEntry,
                      load_features, load_labels, load_softmax, store_features,
                      store_labels, store_manifest)

ROLE_INDEX = {"in-train": 0, "out-proxy": 1, "ood-test": 2, "in-val": 3}

DEFAULT_SCENE_COUNTS = {"in-train": 6, "out-proxy": 4, "ood-test": 6, "in-val": 4}


@dataclass
class SceneConfig:
    height: int = 48
    width: int = 48
    num_classes: int = 5        # class 0 is the background / "road"
    num_features: int = 4
    noise: float = 0.3
    blur_passes: int = 1
    blobs_min: int = 5
    blobs_max: int = 7
    blob_half_min: int = 3
    blob_half_max: int = 6
    ood_blobs_min: int = 3
    ood_blobs_max: int = 4
    ood_half_min: int = 4
    ood_half_max: int = 6
    ood_margin: int = 4
    distractors_min: int = 1
    distractors_max: int = 2
    distractor_length_min: int = 8
    distractor_length_max: int = 14
    distractor_width_min: int = 2
    distractor_width_max: int = 3
    distractor_depth: float = 0.5   # radial position between the class and proxy shells
    in_radius: float = 2.0
    proxy_radius: float = 4.5
    proxy_count: int = 8
    proxy_angle0: float = math.pi / 8.0
    test_radius: float = 5.0
    test_count: int = 8
    test_angle0: float = math.pi / 4.0


@dataclass
class SyntheticScene:
    features: FeatureMap
    labels: LabelMap
    role: str
    image_id: str = ""


def _circle_means(count, radius, angle0, d):
    means = np.zeros((count, d))
    for k in range(count):
        angle = angle0 + 2.0 * math.pi * k / count
        means[k, 0] = radius * math.cos(angle)
        means[k, 1] = radius * math.sin(angle)
    return means


def family_means(config):
    """Class means of the three feature families (in / proxy / test)."""
    q, d = config.num_classes, config.num_features
    in_means = np.zeros((q, d))
    in_means[1:] = _circle_means(q - 1, config.in_radius, 0.0, d)
    hard_radius = config.in_radius + config.distractor_depth * (
        config.proxy_radius - config.in_radius)
    return {
        "in": in_means,
        "proxy": _circle_means(config.proxy_count, config.proxy_radius,
                               config.proxy_angle0, d),
        "test": _circle_means(config.test_count, config.test_radius,
                              config.test_angle0, d),
        # hard in-distribution content: labeled as a trained class, but
        # its features point towards unfamiliar directions at mid radius,
        # the way visually OoD-looking known objects do
        "hard": _circle_means(q - 1, hard_radius,
                              math.pi / max(1, q - 1), d),
    }


def assert_disjoint_families(config):
    """Fail if the proxy and test families share a distribution component."""
    means = family_means(config)
    for p in means["proxy"]:
        for t in means["test"]:
            if np.allclose(p, t, atol=1e-9):
                raise ValueError(
                    f"proxy and test families share the component {p.tolist()}"
                )


def _paint_blob(canvas, rng, half_min, half_max, value):
    h_dim, w_dim = canvas.shape
    ch = int(rng.integers(0, h_dim))
    cw = int(rng.integers(0, w_dim))
    rh = int(rng.integers(half_min, half_max + 1))
    rw = int(rng.integers(half_min, half_max + 1))
    if rng.random() < 0.5:  # rectangle
        canvas[max(0, ch - rh) : ch + rh + 1, max(0, cw - rw) : cw + rw + 1] = value
    else:  # ellipse
        hh, ww = np.ogrid[:h_dim, :w_dim]
        inside = ((hh - ch) / (rh + 0.5)) ** 2 + ((ww - cw) / (rw + 0.5)) ** 2 <= 1.0
        canvas[inside] = value


def _box_blur(values, passes):
    for _ in range(passes):
        padded = np.pad(values, ((1, 1), (1, 1), (0, 0)), mode="edge")
        acc = np.zeros_like(values)
        for dh in (0, 1, 2):
            for dw in (0, 1, 2):
                acc += padded[dh : dh + values.shape[0], dw : dw + values.shape[1]]
        values = acc / 9.0
    return values


def generate_scene(role, rng, config, image_id=""):
    if role not in ROLE_INDEX:
        raise ValueError(f"unknown role {role!r}")
    assert_disjoint_families(config)
    q, d = config.num_classes, config.num_features
    h_dim, w_dim = config.height, config.width
    means = family_means(config)

    labels = np.zeros((h_dim, w_dim), dtype=np.int32)
    mean_field = np.zeros((h_dim, w_dim, d))

    if role == "out-proxy":
        # the whole scene is out-distribution: background plus blobs drawn
        # from proxy-family components; blobs only use components adjacent
        # to the background's so boundary blur never interpolates across
        # the circle's center into in-distribution territory
        labels[:] = q
        n_proxy = len(means["proxy"])
        bg = int(rng.integers(0, n_proxy))
        mean_field[:] = means["proxy"][bg]
        for _ in range(int(rng.integers(config.blobs_min, config.blobs_max + 1))):
            comp = (bg + int(rng.integers(-1, 2))) % n_proxy
            blob = np.zeros((h_dim, w_dim), dtype=np.int32)
            _paint_blob(blob, rng, config.blob_half_min, config.blob_half_max, 1)
            mean_field[blob == 1] = means["proxy"][comp]
    else:
        # every foreground class appears at least once per scene so no
        # class is starved of training pixels on unlucky seeds
        n_blobs = int(rng.integers(config.blobs_min, config.blobs_max + 1))
        classes = list(range(1, q))
        classes += [int(rng.integers(1, q)) for _ in range(max(0, n_blobs - len(classes)))]
        rng.shuffle(classes)
        for cls in classes:
            _paint_blob(labels, rng, config.blob_half_min, config.blob_half_max, cls)
        distractors = []
        if role == "ood-test":
            # distractor bars: thin in-distribution structures with
            # hard-family features; they score as high as real unknowns on
            # mean dispersion (spoiling a pure score ranking) but their
            # elongated geometry gives the meta classifier a handle
            for _ in range(int(rng.integers(config.distractors_min,
                                            config.distractors_max + 1))):
                k = int(rng.integers(0, len(means["hard"])))
                length = int(rng.integers(config.distractor_length_min,
                                          config.distractor_length_max + 1))
                width = int(rng.integers(config.distractor_width_min,
                                         config.distractor_width_max + 1))
                ch = int(rng.integers(0, h_dim))
                cw = int(rng.integers(0, w_dim))
                bar = np.zeros((h_dim, w_dim), dtype=bool)
                if rng.random() < 0.5:
                    bar[max(0, ch - length // 2) : ch + (length + 1) // 2,
                        max(0, cw - width // 2) : cw + (width + 1) // 2] = True
                else:
                    bar[max(0, ch - width // 2) : ch + (width + 1) // 2,
                        max(0, cw - length // 2) : cw + (length + 1) // 2] = True
                labels[bar] = k + 1
                distractors.append((bar, means["hard"][k]))
            # OoD blobs land on free background with a margin to foreground
            # blobs, distractors and each other: without the gap, blur rings
            # bridge the flagged regions at low thresholds and ground-truth
            # objects merge into predominantly-false-positive segments
            margin = config.ood_margin
            for _ in range(int(rng.integers(config.ood_blobs_min,
                                            config.ood_blobs_max + 1))):
                comp = int(rng.integers(0, len(means["test"])))
                for _attempt in range(60):
                    blob = np.zeros((h_dim, w_dim), dtype=np.int32)
                    _paint_blob(blob, rng, config.ood_half_min, config.ood_half_max, 1)
                    padded = np.pad(blob.astype(bool), margin)
                    grown = np.zeros((h_dim, w_dim), dtype=bool)
                    for dh in range(-margin, margin + 1):
                        for dw in range(-margin, margin + 1):
                            grown |= padded[margin + dh : margin + dh + h_dim,
                                            margin + dw : margin + dw + w_dim]
                    if (labels[grown] == 0).all():
                        labels[blob == 1] = q
                        mean_field[blob == 1] = means["test"][comp]
                        break
        in_region = labels < q
        mean_field[in_region] = means["in"][labels[in_region]]
        for blob_mask, mixed in distractors:
            mean_field[blob_mask & (labels < q)] = mixed

    features = mean_field + config.noise * rng.normal(size=(h_dim, w_dim, d))
    features = _box_blur(features, config.blur_passes)
    return SyntheticScene(
        FeatureMap(features.astype(np.float32)),
        LabelMap(labels, q),
        role,
        image_id,
    )


def generate_dataset(role, n_scenes, seed, config=None):
    """Deterministic list of scenes for one dataset role."""
    config = config or SceneConfig()
    scenes = []
    for i in range(n_scenes):
        rng = np.random.default_rng([int(seed), 37, ROLE_INDEX[role], i])
        scenes.append(generate_scene(role, rng, config,
                                     image_id=f"{role}-s{seed}-{i:03d}"))
    return scenes


# ---------------------------------------------------------------------------
# persistence

def save_scenes(scenes, role, num_classes, out_dir, manifest_name=None):
    """Write FEAT/LABL files plus a manifest; returns the manifest path."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for scene in scenes:
        feat_path = out_dir / f"{scene.image_id}.feat"
        labl_path = out_dir / f"{scene.image_id}.labl"
        store_features(scene.features, feat_path)
        store_labels(scene.labels, labl_path)
        entries.append(ManifestEntry(scene.image_id, str(labl_path),
                                     features=str(feat_path)))
    manifest = DatasetManifest(num_classes, role, entries)
    manifest_path = out_dir / (manifest_name or f"{role}.json")
    store_manifest(manifest, manifest_path)
    return manifest_path


def load_scene_entry(entry, role):
    """Rehydrate one manifest entry into a scene (features + labels)."""
    labels = load_labels(entry.labels)
    features = load_features(entry.features) if entry.features else None
    return SyntheticScene(features, labels, role, entry.image_id)


def load_scenes(manifest):
    return [load_scene_entry(e, manifest.role) for e in manifest.entries]


def load_pairs(manifest):
    """(SoftmaxMap, LabelMap, image_id) triples for evaluation stages."""
    pairs = []
    for entry in manifest.entries:
        if not entry.softmax:
            raise ValueError(f"manifest entry {entry.image_id} has no softmax file")
        pairs.append((load_softmax(entry.softmax), load_labels(entry.labels),
                      entry.image_id))
    return pairs

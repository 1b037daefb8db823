"""Synthetic single-object scenes with known factors of variation.

A scene is a wall band on top, a floor band below and optionally one
flat-coloured shape. Rendering has no anti-aliasing, so an image is an
exact, bit-reproducible function of the factors. ``extract_factors`` is
the matching analytic measurement instrument: it reads the factors back
from an image (including blurry reconstructions) with a confidence per
estimate.
"""

from __future__ import annotations

import colorsys
import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ContractError

IMAGE_SIZE = 32
SHAPES = ("circle", "square", "triangle")
SIZES = ("small", "medium", "large")

FACTOR_NAMES = (
    "floor_hue",
    "wall_hue",
    "object_present",
    "object_shape",
    "object_hue",
    "object_x",
    "object_y",
    "object_size",
)
CONTINUOUS_FACTORS = ("floor_hue", "wall_hue", "object_hue", "object_x", "object_y")
DISCRETE_FACTORS = ("object_present", "object_shape", "object_size")
OBJECT_FACTORS = ("object_shape", "object_hue", "object_x", "object_y", "object_size")

# Hue factor in [0, 1) maps onto HSV hue [0, HUE_SPAN) so colour never wraps.
HUE_SPAN = 0.8
BACKGROUND_SV = (0.35, 0.55)
OBJECT_SV = (1.0, 1.0)
# Radii in pixels at 32x32; they scale linearly with the image size.
RADII = {"small": 3.5, "medium": 5.0, "large": 6.5}
SQUARE_HALF_SIDE = 0.85

MASK_THRESHOLD = 0.2
HOMOGENEITY_TOL = 0.08
# Shape bins. Fill ratio (mask area over bounding-box area) is ~0.5 for the
# triangle, ~0.78 for the circle and 1 for the square; pixelation blurs the
# triangle/circle gap at small sizes, so that cut uses fill/2 plus the share
# of mask pixels in the top half of the box (~0.25 triangle, 0.5 otherwise).
TRIANGLE_MAX_SCORE = 0.75
CIRCLE_MAX_FILL = 0.95


def hue_to_rgb(hue, sv):
    return np.array(colorsys.hsv_to_rgb(HUE_SPAN * hue, *sv))


def rgb_to_hue(rgb):
    h, s, v = colorsys.rgb_to_hsv(*np.clip(rgb, 0.0, 1.0))
    if h > (1.0 + HUE_SPAN) / 2:
        h = 0.0  # unused band of the hue circle, closest to red
    return min(h / HUE_SPAN, np.nextafter(1.0, 0.0)), s, v


@dataclass(frozen=True)
class FactorScene:
    floor_hue: float
    wall_hue: float
    object_present: int
    object_shape: str
    object_hue: float
    object_x: float
    object_y: float
    object_size: str
    image_size: int = IMAGE_SIZE
    image: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.image is None:
            object.__setattr__(self, "image", render(self))

    def factors(self):
        return {name: getattr(self, name) for name in FACTOR_NAMES}

    def __eq__(self, other):
        if not isinstance(other, FactorScene):
            return NotImplemented
        return self.factors() == other.factors() and np.array_equal(self.image, other.image)

    __hash__ = None


def validate_factors(f):
    for name in CONTINUOUS_FACTORS:
        value = f[name]
        if not 0.0 <= value < 1.0:
            raise ContractError(f"{name} must lie in [0, 1), got {value}")
    if f["object_present"] not in (0, 1):
        raise ContractError(f"object_present must be 0 or 1, got {f['object_present']}")
    if f["object_shape"] not in SHAPES:
        raise ContractError(f"unknown object_shape {f['object_shape']!r}")
    if f["object_size"] not in SIZES:
        raise ContractError(f"unknown object_size {f['object_size']!r}")


def sample_scene(seed, image_size=IMAGE_SIZE):
    """Draw every factor independently and uniformly from its domain."""
    rng = np.random.default_rng(seed)
    u = rng.random(5)
    return FactorScene(
        floor_hue=float(u[0]),
        wall_hue=float(u[1]),
        object_present=int(rng.integers(0, 2)),
        object_shape=SHAPES[int(rng.integers(0, len(SHAPES)))],
        object_hue=float(u[2]),
        object_x=float(u[3]),
        object_y=float(u[4]),
        object_size=SIZES[int(rng.integers(0, len(SIZES)))],
        image_size=image_size,
    )


def sample_scenes(count, seed, image_size=IMAGE_SIZE):
    """``count`` scenes whose individual seeds all derive from ``seed``."""
    seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    return [sample_scene(int(s), image_size) for s in seeds]


def _geometry(size):
    scale = size / IMAGE_SIZE
    margin = RADII["large"] * scale + 1.0
    return scale, margin


def object_center(x, y, size):
    _, margin = _geometry(size)
    span = size - 2.0 * margin
    return margin + x * span, margin + y * span


def _pixel_grid(size):
    c = np.arange(size) + 0.5
    return np.meshgrid(c, c)  # px varies along columns, py along rows


def shape_mask(shape, object_size, x, y, size=IMAGE_SIZE):
    scale, _ = _geometry(size)
    r = RADII[object_size] * scale
    cx, cy = object_center(x, y, size)
    px, py = _pixel_grid(size)
    dx, dy = px - cx, py - cy
    if shape == "circle":
        return dx * dx + dy * dy <= r * r
    if shape == "square":
        s = SQUARE_HALF_SIDE * r
        return (np.abs(dx) <= s) & (np.abs(dy) <= s)
    # Upward equilateral triangle with its centroid at the object centre.
    half = r * np.sqrt(3.0) / 2.0
    verts = [(0.0, -r), (half, r / 2.0), (-half, r / 2.0)]
    inside = np.ones_like(dx, dtype=bool)
    for (x0, y0), (x1, y1) in zip(verts, verts[1:] + verts[:1]):
        inside &= (x1 - x0) * (dy - y0) - (y1 - y0) * (dx - x0) >= 0
    return inside


def expected_area(shape, object_size, size=IMAGE_SIZE):
    r = RADII[object_size] * size / IMAGE_SIZE
    if shape == "circle":
        return np.pi * r * r
    if shape == "square":
        return (2.0 * SQUARE_HALF_SIDE * r) ** 2
    return 3.0 * np.sqrt(3.0) / 4.0 * r * r


def render(factors, size=None):
    """Rasterise factors (a FactorScene or a mapping) into a (3, H, W) image."""
    if isinstance(factors, FactorScene):
        size = factors.image_size if size is None else size
        factors = factors.factors()
    size = IMAGE_SIZE if size is None else size
    validate_factors(factors)
    horizon = size // 2
    img = np.empty((size, size, 3))
    img[:horizon] = hue_to_rgb(factors["wall_hue"], BACKGROUND_SV)
    img[horizon:] = hue_to_rgb(factors["floor_hue"], BACKGROUND_SV)
    if factors["object_present"]:
        mask = shape_mask(
            factors["object_shape"],
            factors["object_size"],
            factors["object_x"],
            factors["object_y"],
            size,
        )
        img[mask] = hue_to_rgb(factors["object_hue"], OBJECT_SV)
    return np.ascontiguousarray(img.transpose(2, 0, 1))


def image_checksum(image):
    return hashlib.sha256(np.ascontiguousarray(image, dtype="<f8").tobytes()).hexdigest()


@dataclass
class FactorEstimate:
    """Per-factor estimates (``None`` when unobservable) and confidences in [0, 1]."""

    values: dict
    confidence: dict

    def __getitem__(self, name):
        return self.values[name]


def _sv_match(s, v, target):
    return float(np.clip(1.0 - (abs(s - target[0]) + abs(v - target[1])) / 0.3, 0.0, 1.0))


def _edge_margin(value, edges, width):
    if not edges:
        return 1.0
    return float(np.clip(min(abs(value - e) for e in edges) / width, 0.0, 1.0))


def extract_factors(image):
    """Estimate scene factors from an image of shape (3, H, W) in [0, 1].

    Band colours come from the mean of non-object pixels per band; the
    object mask is every pixel farther than ``MASK_THRESHOLD`` (max-channel
    distance) from both band colours. Centroid gives position, mask colour
    gives hue, bounding-box fill ratio and top/bottom balance give shape,
    and area given shape gives size.
    """
    img = np.asarray(getattr(image, "data", image), dtype=np.float64)
    size = img.shape[-1]
    pix = np.clip(img, 0.0, 1.0).transpose(1, 2, 0)
    horizon = size // 2
    bands = (pix[:horizon], pix[horizon:])

    ref = [np.median(b.reshape(-1, 3), axis=0) for b in bands]
    dist = np.minimum(
        np.abs(pix - ref[0]).max(axis=2), np.abs(pix - ref[1]).max(axis=2)
    )
    mask = dist > MASK_THRESHOLD
    band_masks = (mask[:horizon], mask[horizon:])

    values, conf = {}, {}
    close = np.zeros_like(mask)
    for name, band, bmask, r, rows in zip(
        ("wall_hue", "floor_hue"), bands, band_masks, ref,
        (slice(0, horizon), slice(horizon, size)),
    ):
        bg = band[~bmask]
        color = bg.mean(axis=0) if bg.size else r
        hue, s, v = rgb_to_hue(color)
        close[rows] = np.abs(band - color).max(axis=2) <= HOMOGENEITY_TOL
        homog = float(close[rows][~bmask].mean()) if bg.size else 0.0
        values[name] = float(hue)
        conf[name] = homog * _sv_match(s, v, BACKGROUND_SV)
    background = ~mask
    q = float(close[background].mean()) if background.any() else 0.0

    area_scale = (size / IMAGE_SIZE) ** 2
    min_area = 6.0 * area_scale
    max_area = max(expected_area(s, "large", size) for s in SHAPES)
    area = int(mask.sum())
    present = area >= min_area
    values["object_present"] = int(present)
    if not present:
        conf["object_present"] = q * (1.0 - area / min_area)
        for name in OBJECT_FACTORS:
            values[name] = None
            conf[name] = 0.0
        return FactorEstimate(values, conf)

    labels, count = ndimage.label(mask)
    sizes = np.bincount(labels.ravel())[1:]
    compact = float(sizes.max() / area)
    plausible = float(np.clip(1.0 - (area - 1.3 * max_area) / max_area, 0.0, 1.0))
    conf["object_present"] = q * compact * plausible
    base = conf["object_present"]

    rows, cols = np.nonzero(mask)
    _, margin = _geometry(size)
    span = size - 2.0 * margin
    cx, cy = cols.mean() + 0.5, rows.mean() + 0.5
    values["object_x"] = float(np.clip((cx - margin) / span, 0.0, np.nextafter(1.0, 0.0)))
    values["object_y"] = float(np.clip((cy - margin) / span, 0.0, np.nextafter(1.0, 0.0)))
    conf["object_x"] = conf["object_y"] = base

    obj = pix[mask]
    color = obj.mean(axis=0)
    hue, s, v = rgb_to_hue(color)
    homog = float((np.abs(obj - color).max(axis=1) <= HOMOGENEITY_TOL).mean())
    values["object_hue"] = float(hue)
    conf["object_hue"] = base * homog * _sv_match(s, v, OBJECT_SV)

    bbox = (rows.max() - rows.min() + 1) * (cols.max() - cols.min() + 1)
    fill = area / bbox
    mid = (rows.min() + rows.max()) / 2.0
    top = ((rows < mid).sum() + 0.5 * (rows == mid).sum()) / area
    score = top + 0.5 * fill
    if score < TRIANGLE_MAX_SCORE:
        shape, margin_ = "triangle", _edge_margin(score, [TRIANGLE_MAX_SCORE], 0.03)
    elif fill < CIRCLE_MAX_FILL:
        shape = "circle"
        margin_ = min(
            _edge_margin(score, [TRIANGLE_MAX_SCORE], 0.03),
            _edge_margin(fill, [CIRCLE_MAX_FILL], 0.03),
        )
    else:
        shape, margin_ = "square", _edge_margin(fill, [CIRCLE_MAX_FILL], 0.03)
    values["object_shape"] = shape
    conf["object_shape"] = base * margin_

    log_areas = np.log([expected_area(shape, z, size) for z in SIZES])
    la = np.log(area)
    k = int(np.argmin(np.abs(log_areas - la)))
    values["object_size"] = SIZES[k]
    edges = [(log_areas[i] + log_areas[i + 1]) / 2 for i in range(len(SIZES) - 1)]
    conf["object_size"] = base * _edge_margin(la, edges, 0.1)
    return FactorEstimate(values, conf)

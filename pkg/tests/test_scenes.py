import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddfprobe.errors import ContractError
from ddfprobe.scenes import (
    CONTINUOUS_FACTORS,
    DISCRETE_FACTORS,
    FACTOR_NAMES,
    OBJECT_FACTORS,
    SHAPES,
    SIZES,
    FactorScene,
    extract_factors,
    image_checksum,
    render,
    sample_scene,
    sample_scenes,
    shape_mask,
)

# Rendered once from this tuple and pinned; any change to rasterisation shows up here.
GOLDEN_FACTORS = dict(
    floor_hue=0.25, wall_hue=0.6, object_present=1, object_shape="triangle",
    object_hue=0.05, object_x=0.3, object_y=0.7, object_size="medium",
)
GOLDEN_SHA256 = "c7e710361effc80366323a10b9569c3f52d30a4c239038d2787877baff501ef4"
GOLDEN_EMPTY_SHA256 = "dd99136f1b6c92c2df57f63ee98e34f1854af8dd2d52df1458f5a9b0135da2ad"

seeds = st.integers(min_value=0, max_value=2**64 - 1)


def background_colors(f):
    empty = render({**f, "object_present": 0})
    return empty[:, 0, 0], empty[:, -1, 0]


def test_same_seed_same_scene():
    assert sample_scene(123) == sample_scene(123)
    assert np.array_equal(sample_scene(123).image, sample_scene(123).image)


@given(seeds)
def test_factors_in_domain(seed):
    s = sample_scene(seed)
    for name in CONTINUOUS_FACTORS:
        assert 0.0 <= getattr(s, name) < 1.0
    assert s.object_present in (0, 1)
    assert s.object_shape in SHAPES and s.object_size in SIZES
    assert s.image.shape == (3, 32, 32)
    assert s.image.min() >= 0.0 and s.image.max() <= 1.0


def test_presence_rate():
    rate = np.mean([sample_scene(s).object_present for s in range(10_000)])
    assert abs(rate - 0.5) <= 0.02


def test_golden_checksum():
    assert image_checksum(render(GOLDEN_FACTORS)) == GOLDEN_SHA256
    assert image_checksum(render({**GOLDEN_FACTORS, "object_present": 0})) == GOLDEN_EMPTY_SHA256


@given(seeds)
def test_render_is_pure(seed):
    f = sample_scene(seed).factors()
    a, b = render(f), render(dict(f))
    assert a.tobytes() == b.tobytes()


@given(seeds)
def test_absent_object_leaves_only_bands(seed):
    f = {**sample_scene(seed).factors(), "object_present": 0}
    img = render(f)
    wall, floor = background_colors(f)
    h = img.shape[1] // 2
    assert np.all(img[:, :h] == wall[:, None, None])
    assert np.all(img[:, h:] == floor[:, None, None])


@given(seeds, st.floats(0, 1, exclude_max=True))
def test_hue_change_confined_to_mask(seed, hue):
    f = {**sample_scene(seed).factors(), "object_present": 1}
    a, b = render(f), render({**f, "object_hue": hue})
    mask = shape_mask(f["object_shape"], f["object_size"], f["object_x"], f["object_y"])
    changed = np.any(a != b, axis=0)
    assert not np.any(changed & ~mask)


@pytest.mark.parametrize("name,value", [
    ("floor_hue", 1.0), ("wall_hue", -0.1), ("object_present", 2),
    ("object_shape", "star"), ("object_size", "huge"), ("object_x", float("nan")),
])
def test_out_of_domain_rejected(name, value):
    with pytest.raises(ContractError):
        render({**GOLDEN_FACTORS, name: value})


def test_sample_scenes_deterministic():
    a, b = sample_scenes(20, 5), sample_scenes(20, 5)
    assert all(x == y for x, y in zip(a, b))
    assert len({s.image.tobytes() for s in a}) == 20


# -- extractor -----------------------------------------------------------


def round_trip_ok(scene):
    est = extract_factors(scene.image).values
    f = scene.factors()
    if est["object_present"] != f["object_present"]:
        return False
    names = FACTOR_NAMES if f["object_present"] else [n for n in FACTOR_NAMES if n not in OBJECT_FACTORS]
    for name in names:
        if name in DISCRETE_FACTORS:
            if est[name] != f[name]:
                return False
        elif abs(est[name] - f[name]) > 0.05:
            return False
    return True


def test_round_trip_recovers_factors():
    scenes = sample_scenes(1000, 2024)
    ok = np.mean([round_trip_ok(s) for s in scenes])
    assert ok >= 0.99


def test_absent_object_attributes_unobservable():
    f = {**GOLDEN_FACTORS, "object_present": 0}
    est = extract_factors(render(f))
    for name in OBJECT_FACTORS:
        assert est.values[name] is None and est.confidence[name] == 0.0


def test_blank_image():
    est = extract_factors(np.zeros((3, 32, 32)))
    assert est.values["object_present"] == 0
    assert est.confidence["object_present"] >= 0.9


def test_noise_image_low_confidence():
    rng = np.random.default_rng(0)
    for _ in range(20):
        est = extract_factors(rng.uniform(0, 1, (3, 32, 32)))
        assert all(0.0 <= c <= 0.5 for c in est.confidence.values())


@given(seeds)
def test_confidences_in_unit_interval(seed):
    noisy = np.clip(sample_scene(seed).image + np.random.default_rng(seed % 2**32).normal(0, 0.05, (3, 32, 32)), 0, 1)
    for est in (extract_factors(sample_scene(seed).image), extract_factors(noisy)):
        assert set(est.values) == set(FACTOR_NAMES)
        assert all(0.0 <= c <= 1.0 for c in est.confidence.values())


def test_factor_scene_renders_itself():
    s = FactorScene(**GOLDEN_FACTORS)
    assert image_checksum(s.image) == GOLDEN_SHA256

"""Hand-wired hosts with known unit semantics, for validating the probe.

An :class:`OracleHost` "encodes" an image by reading its factors with the
analytic extractor and "decodes" by re-rendering, after letting each
representation unit act on one factor:

* ``dead`` units are ignored by the decoder;
* ``graded`` units shift a continuous factor by ``gain * activation``;
* ``switch`` units flip a discrete factor once the activation exceeds
  ``threshold``.

Every unit's activation is 0 on unperturbed inputs, so the delta = 0
reconstruction is the re-rendered input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ddf import offset_unit
from .errors import ContractError
from .scenes import (
    CONTINUOUS_FACTORS,
    DISCRETE_FACTORS,
    IMAGE_SIZE,
    SHAPES,
    SIZES,
    extract_factors,
    render,
)

# Stand-ins for unobservable object attributes when no object is visible.
_OBJECT_DEFAULTS = {
    "object_shape": "circle",
    "object_hue": 0.5,
    "object_x": 0.5,
    "object_y": 0.5,
    "object_size": "medium",
}
_TOP = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class OracleUnit:
    kind: str  # "dead", "graded" or "switch"
    factor: str | None = None
    gain: float = 1.0
    threshold: float = 0.15

    def __post_init__(self):
        if self.kind == "dead":
            return
        if self.kind == "graded" and self.factor not in CONTINUOUS_FACTORS:
            raise ContractError(f"graded unit needs a continuous factor, got {self.factor!r}")
        if self.kind == "switch" and self.factor not in DISCRETE_FACTORS:
            raise ContractError(f"switch unit needs a discrete factor, got {self.factor!r}")
        if self.kind not in ("graded", "switch"):
            raise ContractError(f"unknown oracle unit kind {self.kind!r}")

    @property
    def expected_label(self):
        return {"dead": "redundant", "graded": "continuous", "switch": "discrete"}[self.kind]


def _flip(name, value):
    if name == "object_present":
        return 1 - value
    cycle = SHAPES if name == "object_shape" else SIZES
    return cycle[(cycle.index(value) + 1) % len(cycle)]


class OracleHost:
    probe_target = "representation"

    def __init__(self, units, image_size=IMAGE_SIZE, model_id="oracle", seed=0):
        self.units = tuple(units)
        if not self.units:
            raise ContractError("oracle host needs at least one unit")
        self.image_size = image_size
        self.model_id = model_id
        self.seed = seed
        self.dataset = {"image_size": image_size, "kind": "oracle"}

    @property
    def probe_width(self):
        return len(self.units)

    @property
    def d(self):
        return len(self.units)

    def probe_state(self, images):
        factors = []
        for img in images:
            est = extract_factors(img).values
            f = {k: (v if v is not None else _OBJECT_DEFAULTS[k]) for k, v in est.items()}
            factors.append(f)
        return {"activations": np.zeros((len(images), len(self.units))), "factors": factors}

    def _decode_one(self, base, activations):
        f = dict(base)
        for unit, a in zip(self.units, activations):
            if unit.kind == "graded":
                f[unit.factor] = float(np.clip(f[unit.factor] + unit.gain * a, 0.0, _TOP))
            elif unit.kind == "switch" and a > unit.threshold:
                f[unit.factor] = _flip(unit.factor, f[unit.factor])
        return render(f, self.image_size)

    def decode_perturbed(self, state, neuron, delta):
        if not 0 <= neuron < self.probe_width:
            raise ContractError(f"neuron {neuron} outside [0, {self.probe_width})")
        acts = offset_unit(state["activations"], neuron, delta)
        return np.stack([self._decode_one(f, a) for f, a in zip(state["factors"], acts)])

    def reconstruct(self, images):
        state = self.probe_state(images)
        return np.stack([self._decode_one(f, a) for f, a in zip(state["factors"], state["activations"])])


def mixed_oracle(n_dead=3, n_switch=2, n_graded=3, gain=1.0, image_size=IMAGE_SIZE):
    """Oracle with the requested numbers of dead, switch and graded units.

    Switch units cycle through the discrete factors, graded units through
    the always-visible background hues, so each has a reliable effect.
    """
    units = []
    switch_factors = ("object_present", "object_shape", "object_size")
    graded_factors = ("floor_hue", "wall_hue")
    for i in range(max(n_dead, n_switch, n_graded)):
        if i < n_dead:
            units.append(OracleUnit("dead"))
        if i < n_switch:
            units.append(OracleUnit("switch", switch_factors[i % len(switch_factors)]))
        if i < n_graded:
            units.append(OracleUnit("graded", graded_factors[i % len(graded_factors)], gain=gain))
    return OracleHost(units, image_size=image_size)

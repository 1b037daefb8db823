"""Single-neuron perturbation probe and neuron taxonomy.

Every unit of the probed layer (the DDF hidden layer when the host has a
DDF, the representation layer otherwise) is offset by each value of a
delta schedule. The perturbed reconstructions are measured in factor
space with :func:`ddfprobe.scenes.extract_factors`, and each unit is
labelled ``continuous`` (graded effect), ``discrete`` (switch-like) or
``redundant`` (no effect).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .scenes import CONTINUOUS_FACTORS, FACTOR_NAMES, extract_factors, sample_scenes

REPORT_SCHEMA_VERSION = 1
DEFAULT_DELTAS = (-0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3)
DEFAULT_EPSILON = 0.1
DEFAULT_JUMP_FRACTION = 0.7
DEFAULT_PROBE_BATCH = 16
LABELS = ("continuous", "discrete", "redundant")


@dataclass(frozen=True)
class DeltaSchedule:
    deltas: tuple = DEFAULT_DELTAS

    def __post_init__(self):
        deltas = tuple(float(d) for d in self.deltas)
        if 0.0 not in deltas:
            raise ContractError("delta schedule must contain 0")
        if any(b <= a for a, b in zip(deltas, deltas[1:])):
            raise ContractError("delta schedule must be strictly increasing")
        object.__setattr__(self, "deltas", deltas)

    @property
    def zero_index(self):
        return self.deltas.index(0.0)

    def __len__(self):
        return len(self.deltas)

    def __iter__(self):
        return iter(self.deltas)


@dataclass
class NeuronProfile:
    neuron: int
    effects: np.ndarray  # (n_deltas, n_factors)
    label: str = ""
    affected: tuple = ()
    strip: np.ndarray | None = field(default=None, repr=False)

    def factor_effects(self):
        """Max over deltas of |effect| for each factor."""
        return np.abs(self.effects).max(axis=0)


def factor_displacement(base, other, name):
    """Normalised change of one factor and the confidence to weight it by.

    Continuous factors are signed differences over their unit-width domain;
    discrete factors count 1 for any category change. Factors that are not
    observable on either side (object attributes with no object) give 0.
    """
    a, b = base.values[name], other.values[name]
    if a is None or b is None:
        return 0.0, 0.0
    weight = min(base.confidence[name], other.confidence[name])
    if name in CONTINUOUS_FACTORS:
        return float(b - a), weight
    return float(a != b), weight


def _effects(base_estimates, estimates):
    row = np.zeros(len(FACTOR_NAMES))
    for b, e in zip(base_estimates, estimates):
        for k, name in enumerate(FACTOR_NAMES):
            d, w = factor_displacement(b, e, name)
            row[k] += w * d
    return row / len(base_estimates)


def _probe_images(scenes):
    return np.stack([getattr(s, "image", s) for s in scenes])


def sweep_neuron(model, scenes, neuron, schedule=None, state=None, base_estimates=None):
    """Offset one probe unit by every delta and measure factor effects.

    Parameters
    ----------
    model
        A host exposing the probe interface (``probe_width``,
        ``probe_state``, ``decode_perturbed``).
    scenes : sequence of FactorScene or images
        Probe batch.
    neuron : int
        Index into the probed layer.
    schedule : DeltaSchedule, optional
    state, base_estimates : optional
        Precomputed ``model.probe_state`` and the factor estimates of the
        delta = 0 reconstructions; pass them when sweeping many neurons.

    Returns
    -------
    NeuronProfile
        Unlabelled; the first scene's reconstructions are kept as ``strip``.
    """
    schedule = schedule or DeltaSchedule()
    if not 0 <= neuron < model.probe_width:
        raise ContractError(f"neuron {neuron} outside [0, {model.probe_width})")
    if state is None:
        state = model.probe_state(_probe_images(scenes))
    if base_estimates is None:
        base = model.decode_perturbed(state, neuron, 0.0)
        base_estimates = [extract_factors(img) for img in base]
    effects = np.zeros((len(schedule), len(FACTOR_NAMES)))
    columns = []
    for i, delta in enumerate(schedule):
        recon = model.decode_perturbed(state, neuron, delta)
        columns.append(recon[0])
        if delta != 0.0:  # the zero row stays exactly 0: self-comparison
            effects[i] = _effects(base_estimates, [extract_factors(img) for img in recon])
    strip = np.concatenate(columns, axis=2)
    return NeuronProfile(neuron=int(neuron), effects=effects, strip=strip)


def classify_effects(effects, epsilon=DEFAULT_EPSILON, jump_fraction=DEFAULT_JUMP_FRACTION):
    """Taxonomy label for an effect table of shape (n_deltas, n_factors).

    ``redundant`` if every |effect| is below ``epsilon``. Otherwise take the
    dominant factor (largest max |effect|, lowest index on ties): the unit
    is ``discrete`` when one step between adjacent deltas accounts for at
    least ``jump_fraction`` of that factor's curve range, else
    ``continuous``.
    """
    if epsilon <= 0:
        raise ContractError(f"epsilon must be positive, got {epsilon}")
    if not 0.5 < jump_fraction <= 1.0:
        raise ContractError(f"jump_fraction must lie in (0.5, 1], got {jump_fraction}")
    e = np.asarray(effects, dtype=np.float64)
    if e.ndim == 1:
        e = e[:, None]
    peak = np.abs(e).max(axis=0)
    if not peak.max() >= epsilon:
        return "redundant"
    curve = e[:, int(np.argmax(peak))]
    span = curve.max() - curve.min()
    jump = np.abs(np.diff(curve)).max() if len(curve) > 1 else span
    return "discrete" if jump >= jump_fraction * span else "continuous"


def classify_neuron(profile, epsilon=DEFAULT_EPSILON, jump_fraction=DEFAULT_JUMP_FRACTION):
    effects = profile.effects if isinstance(profile, NeuronProfile) else profile
    return classify_effects(effects, epsilon, jump_fraction)


def affected_factors(profile, epsilon=DEFAULT_EPSILON):
    peak = profile.factor_effects()
    return tuple(name for name, v in zip(FACTOR_NAMES, peak) if v >= epsilon)


def disentanglement_score(effect_matrix, epsilon=DEFAULT_EPSILON):
    """Mean number of affected factors per active neuron (0 if none active).

    A neuron is active when its row maximum reaches ``epsilon``; 1.0 means
    every active neuron moves exactly one factor.
    """
    if epsilon <= 0:
        raise ContractError(f"epsilon must be positive, got {epsilon}")
    E = np.abs(np.asarray(effect_matrix, dtype=np.float64))
    if E.size == 0:
        return 0.0
    hits = (E >= epsilon).sum(axis=1)
    active = hits > 0
    return float(hits[active].mean()) if active.any() else 0.0


@dataclass
class ProbeReport:
    model_id: str
    probe_target: str
    profiles: list
    schedule: DeltaSchedule
    epsilon: float
    jump_fraction: float
    seeds: dict
    dataset: dict
    factors: tuple = FACTOR_NAMES

    @property
    def effect_matrix(self):
        if not self.profiles:
            return np.zeros((0, len(self.factors)))
        return np.stack([p.factor_effects() for p in self.profiles])

    @property
    def n_neurons(self):
        return len(self.profiles)

    @property
    def score(self):
        return disentanglement_score(self.effect_matrix, self.epsilon)

    @property
    def counts(self):
        counts = {label: 0 for label in LABELS}
        for p in self.profiles:
            counts[p.label] += 1
        return counts

    @property
    def active_neurons(self):
        return int(sum(p.label != "redundant" for p in self.profiles))

    def to_dict(self):
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "kind": "probe_report",
            "model_id": self.model_id,
            "probe_target": self.probe_target,
            "deltas": list(self.schedule.deltas),
            "factors": list(self.factors),
            "epsilon": self.epsilon,
            "jump_fraction": self.jump_fraction,
            "seeds": dict(self.seeds),
            "dataset": dict(self.dataset),
            "n_neurons": self.n_neurons,
            "active_neurons": self.active_neurons,
            "disentanglement_score": self.score,
            "counts": self.counts,
            "neurons": [
                {
                    "neuron": p.neuron,
                    "label": p.label,
                    "affected_factors": list(p.affected),
                    "effects": p.effects.tolist(),
                }
                for p in self.profiles
            ],
            "effect_matrix": self.effect_matrix.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        profiles = [
            NeuronProfile(
                neuron=n["neuron"],
                effects=np.asarray(n["effects"], dtype=np.float64),
                label=n["label"],
                affected=tuple(n["affected_factors"]),
            )
            for n in doc["neurons"]
        ]
        return cls(
            model_id=doc["model_id"],
            probe_target=doc["probe_target"],
            profiles=profiles,
            schedule=DeltaSchedule(tuple(doc["deltas"])),
            epsilon=doc["epsilon"],
            jump_fraction=doc["jump_fraction"],
            seeds=doc["seeds"],
            dataset=doc["dataset"],
            factors=tuple(doc["factors"]),
        )

    def strips(self):
        return [p.strip for p in self.profiles]


def model_identifier(model):
    ident = getattr(model, "model_id", None)
    if ident:
        return ident
    variant = "ddf" if getattr(model, "ddf", None) is not None else "baseline"
    return f"{variant}-{model.checksum()[:16]}"


def probe_model(
    model,
    num_scenes=DEFAULT_PROBE_BATCH,
    schedule=None,
    seed=0,
    epsilon=DEFAULT_EPSILON,
    jump_fraction=DEFAULT_JUMP_FRACTION,
    threads=1,
    dataset=None,
):
    """Sweep every unit of the model's probe layer and assemble a report.

    Neuron sweeps are independent and run on up to ``threads`` worker
    threads; results are collected in neuron order, so the report does not
    depend on the thread count.
    """
    schedule = schedule or DeltaSchedule()
    check = getattr(model, "check_ready", None)
    if check is not None:
        check()
    scenes = sample_scenes(num_scenes, seed, model.image_size)
    state = model.probe_state(_probe_images(scenes))
    if not np.all(np.isfinite(state["activations"])):
        raise ContractError("probe activations are not finite")
    base = model.decode_perturbed(state, 0, 0.0)
    base_estimates = [extract_factors(img) for img in base]

    def run(j):
        profile = sweep_neuron(model, scenes, j, schedule, state, base_estimates)
        profile.label = classify_neuron(profile, epsilon, jump_fraction)
        profile.affected = affected_factors(profile, epsilon)
        return profile

    neurons = range(model.probe_width)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            profiles = list(pool.map(run, neurons))
    else:
        profiles = [run(j) for j in neurons]
    if dataset is None:
        dataset = dict(getattr(model, "dataset", None) or {"image_size": model.image_size})
    return ProbeReport(
        model_id=model_identifier(model),
        probe_target=model.probe_target,
        profiles=profiles,
        schedule=schedule,
        epsilon=float(epsilon),
        jump_fraction=float(jump_fraction),
        seeds={"probe": int(seed), "model": int(getattr(model, "seed", 0))},
        dataset=dataset,
    )


def _summary(report):
    doc = report if isinstance(report, dict) else report.to_dict()
    return {
        "model_id": doc["model_id"],
        "probe_target": doc["probe_target"],
        "n_neurons": doc["n_neurons"],
        "active_neurons": doc["active_neurons"],
        "disentanglement_score": doc["disentanglement_score"],
        "counts": doc["counts"],
        "seeds": doc["seeds"],
    }


def _best_neurons(doc):
    E = np.asarray(doc["effect_matrix"], dtype=np.float64).reshape(-1, len(doc["factors"]))
    table = {}
    for k, name in enumerate(doc["factors"]):
        if E.shape[0] == 0:
            table[name] = {"neuron": None, "effect": 0.0}
            continue
        j = int(np.argmax(E[:, k]))
        table[name] = {"neuron": j, "effect": float(E[j, k])}
    return table


def compare_models(baseline_report, ddf_report):
    """Side-by-side summary of two probe reports.

    ``score_difference`` is ddf minus baseline (lower scores are better),
    so swapping the arguments negates it. The direction is reported, never
    asserted.
    """
    a = baseline_report if isinstance(baseline_report, dict) else baseline_report.to_dict()
    b = ddf_report if isinstance(ddf_report, dict) else ddf_report.to_dict()
    if a["dataset"] != b["dataset"]:
        raise ContractError(
            f"reports come from different dataset configs: {a['dataset']} vs {b['dataset']}"
        )
    if list(a["factors"]) != list(b["factors"]):
        raise ContractError("reports measure different factor sets")
    diff = b["disentanglement_score"] - a["disentanglement_score"]
    if diff < 0:
        direction = "ddf_lower"
    elif diff > 0:
        direction = "baseline_lower"
    else:
        direction = "equal"
    best_a, best_b = _best_neurons(a), _best_neurons(b)
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "comparison",
        "dataset": a["dataset"],
        "factors": list(a["factors"]),
        "baseline": _summary(a),
        "ddf": _summary(b),
        "score_difference": diff,
        "direction": direction,
        "ddf_better": diff < 0,
        "count_difference": {k: b["counts"][k] - a["counts"][k] for k in LABELS},
        "best_neurons": {
            name: {"baseline": best_a[name], "ddf": best_b[name]} for name in a["factors"]
        },
    }

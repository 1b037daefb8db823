"""Encoder -> representation -> (DDF) -> decoder reconstruction host.

The two variants built by :func:`build_host` share architecture and,
for a given seed, their initial encoder/decoder weights; the only
difference is the frozen DDF inserted right after the representation.
"""

from __future__ import annotations

import io
import json
import time
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .ddf import DDFLayer, ddf_forward, ddf_hidden, ddf_init, parameter_checksum, shift_output
from .ddf import DEFAULT_BIAS_RANGE, offset_unit
from .errors import ContractError, TrainingError
from .scenes import IMAGE_SIZE, sample_scenes

CHECKPOINT_FORMAT = "ddfprobe-checkpoint"
CHECKPOINT_SCHEMA_VERSION = 1
HIDDEN_WIDTH = 256
# Near-zero output layer: a random initial image makes the fastest early
# move one that silences every unit of the frozen DDF, and dead frozen
# units never recover.
OUTPUT_INIT_SCALE = 0.01


class Linear:
    """Fully connected layer, weight stored as (out, in), Kaiming-normal init.

    ``scale`` multiplies the initial weights.
    """

    def __init__(self, in_features, out_features, rng, name, scale=1.0):
        w = rng.normal(0.0, np.sqrt(2.0 / in_features), size=(out_features, in_features)) * scale
        self.weight = T.Parameter(w, name=f"{name}.weight")
        self.bias = T.Parameter(np.zeros(out_features), name=f"{name}.bias")

    @property
    def parameters(self):
        return [self.weight, self.bias]

    def __call__(self, x):
        return T.add(T.matmul(x, self.weight.T), self.bias)


def _mlp(layers, x, final=None):
    for layer in layers[:-1]:
        x = T.relu(layer(x))
    x = layers[-1](x)
    return final(x) if final is not None else x


@dataclass
class HostModel:
    encoder: list
    decoder: list
    ddf: DDFLayer | None
    d: int
    image_size: int = IMAGE_SIZE
    hidden: int = HIDDEN_WIDTH
    seed: int = 0
    steps_trained: int = 0

    @property
    def with_ddf(self):
        return self.ddf is not None

    @property
    def n(self):
        return self.ddf.n if self.ddf is not None else None

    @property
    def input_width(self):
        return 3 * self.image_size * self.image_size

    @property
    def parameters(self):
        enc = [p for layer in self.encoder for p in layer.parameters]
        dec = [p for layer in self.decoder for p in layer.parameters]
        mid = self.ddf.parameters if self.ddf is not None else []
        return enc + mid + dec

    @property
    def trainable_parameters(self):
        return [p for p in self.parameters if not p.frozen]

    @property
    def frozen_parameters(self):
        return [p for p in self.parameters if p.frozen]

    def encoder_parameters(self):
        return [p for layer in self.encoder for p in layer.parameters]

    def config(self):
        cfg = {
            "d": self.d,
            "with_ddf": self.with_ddf,
            "image_size": self.image_size,
            "hidden": self.hidden,
            "seed": self.seed,
        }
        if self.ddf is not None:
            cfg["ddf"] = self.ddf.config()
        return cfg

    def checksum(self):
        return parameter_checksum(self.parameters)

    # -- forward pieces -------------------------------------------------
    def _flatten(self, images):
        x = T.as_tensor(images)
        return T.reshape(x, (x.shape[0], self.input_width))

    def encode(self, images):
        return _mlp(self.encoder, self._flatten(images))

    def represent(self, images):
        """Representation seen by the decoder (after the DDF when present)."""
        z = self.encode(images)
        return ddf_forward(self.ddf, z) if self.ddf is not None else z

    def decode(self, rep):
        out = _mlp(self.decoder, T.as_tensor(rep), final=T.sigmoid)
        s = self.image_size
        return T.reshape(out, (out.shape[0], 3, s, s))

    def forward(self, images):
        return self.decode(self.represent(images))

    __call__ = forward

    def reconstruct(self, images):
        with T.no_grad():
            return self.forward(images).data

    # -- probe interface ------------------------------------------------
    @property
    def probe_target(self):
        return "ddf_hidden" if self.ddf is not None else "representation"

    @property
    def probe_width(self):
        return self.ddf.n if self.ddf is not None else self.d

    def probe_state(self, images):
        """Activations of the probed layer plus what is needed to decode them."""
        with T.no_grad():
            z = self.encode(images)
            if self.ddf is None:
                return {"activations": z.data, "rep": z.data}
            hidden = ddf_hidden(self.ddf, z)
            return {"activations": hidden.data, "rep": ddf_forward(self.ddf, z).data}

    def decode_perturbed(self, state, neuron, delta):
        """Decode after adding ``delta`` to probe unit ``neuron`` (no re-clamping)."""
        if not 0 <= neuron < self.probe_width:
            raise ContractError(f"neuron {neuron} outside [0, {self.probe_width})")
        if self.ddf is None:
            rep = offset_unit(state["rep"], neuron, delta) if delta != 0 else state["rep"]
        else:
            rep = shift_output(self.ddf, state["rep"], neuron, delta)
        with T.no_grad():
            return self.decode(rep).data

    def check_ready(self):
        if self.steps_trained == 0:
            raise ContractError("model has not been trained")
        for p in self.parameters:
            if not np.all(np.isfinite(p.data)):
                raise ContractError(f"parameter {p.name} holds non-finite values")


def derived_seed(seed, stream):
    return int(np.random.SeedSequence([seed, stream]).generate_state(1, dtype=np.uint64)[0])


def build_host(
    d,
    with_ddf,
    n=None,
    seed=0,
    image_size=IMAGE_SIZE,
    hidden=HIDDEN_WIDTH,
    bias_low=DEFAULT_BIAS_RANGE[0],
    bias_high=DEFAULT_BIAS_RANGE[1],
):
    """Build a baseline (``with_ddf=False``) or DDF host.

    Encoder and decoder weights come from one stream of ``seed`` and the DDF
    from another, so both variants start from identical trainable weights.
    """
    if d < 1 or image_size < 1 or hidden < 1:
        raise ContractError("host widths must be positive")
    rng = np.random.default_rng(derived_seed(seed, 0))
    width = 3 * image_size * image_size
    encoder = [
        Linear(width, hidden, rng, "enc0"),
        Linear(hidden, hidden, rng, "enc1"),
        Linear(hidden, d, rng, "enc2"),
    ]
    decoder = [
        Linear(d, hidden, rng, "dec0"),
        Linear(hidden, hidden, rng, "dec1"),
        Linear(hidden, width, rng, "dec2", scale=OUTPUT_INIT_SCALE),
    ]
    ddf = None
    if with_ddf:
        ddf = ddf_init(d, d if n is None else n, derived_seed(seed, 1), bias_low, bias_high)
    return HostModel(encoder, decoder, ddf, d, image_size, hidden, seed)


@dataclass
class TrainingLog:
    steps: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    seed: int = 0
    final_checksum: str = ""
    encoder_grad_norm_first_step: float = 0.0
    checkpoints: list = field(default_factory=list)

    def record(self, step, loss, seconds):
        self.steps.append(step)
        self.losses.append(loss)
        self.seconds.append(seconds)

    def final_loss(self, window=100):
        """Mean batch loss over the last ``window`` steps."""
        return float(np.mean(self.losses[-window:]))

    def to_csv(self):
        buf = io.StringIO()
        buf.write("step,loss\n")
        for s, l in zip(self.steps, self.losses):
            buf.write(f"{s},{l!r}\n")
        return buf.getvalue()


def scene_pool(num_scenes, seed, image_size=IMAGE_SIZE):
    scenes = sample_scenes(num_scenes, derived_seed(seed, 2), image_size)
    return np.stack([s.image for s in scenes])


def train(
    model,
    num_scenes,
    steps,
    batch,
    lr,
    seed,
    momentum=0.9,
    optimizer="adam",
    warmup=0,
    checkpoint_every=0,
    checkpoint_dir=None,
    images=None,
    checkpoint_extra=None,
):
    """Minimise mean-squared reconstruction error with Adam or momentum SGD.

    Parameters
    ----------
    model : HostModel
        Trained in place; frozen DDF weights are never written.
    num_scenes : int
        Size of the seeded scene pool minibatches are drawn from.
    steps, batch : int
        Number of updates and minibatch size.
    lr : float
        Step size.
    momentum : float
        Heavy-ball momentum, used by ``optimizer="sgd"`` only.
    optimizer : {"adam", "sgd"}
        Plain SGD stalls on the mean-image plateau of this task (it learns
        the average scene long before the low-contrast background hues),
        so Adam is the default.
    warmup : int
        Linear learning-rate warmup over this many steps (0 disables it).
        Both variants take the same schedule; it damps the first large Adam
        steps, which otherwise push many DDF units below threshold for
        good.
    seed : int
        Drives the scene pool and minibatch order.
    checkpoint_every : int
        When positive and ``checkpoint_dir`` is set, save a checkpoint every
        that many steps.
    images : ndarray, optional
        Pre-rendered pool of shape (num, 3, H, W), overriding ``num_scenes``.
    checkpoint_extra : dict, optional
        Stored in the header of every intermediate checkpoint.

    Returns
    -------
    TrainingLog
    """
    if steps < 1:
        raise ContractError(f"steps must be >= 1, got {steps}")
    if batch < 1:
        raise ContractError(f"batch must be >= 1, got {batch}")
    if warmup < 0:
        raise ContractError(f"warmup must be >= 0, got {warmup}")
    if images is None:
        images = scene_pool(num_scenes, seed, model.image_size)
    rng = np.random.default_rng(derived_seed(seed, 3))
    if optimizer == "adam":
        opt = T.Adam(model.trainable_parameters, lr)
    elif optimizer == "sgd":
        opt = T.SGD(model.trainable_parameters, lr, momentum)
    else:
        raise ContractError(f"unknown optimizer {optimizer!r}")
    log = TrainingLog(seed=seed)
    params = model.parameters
    start = time.perf_counter()
    last_finite = None
    for step in range(steps):
        idx = rng.integers(0, len(images), size=batch)
        x = images[idx]
        with np.errstate(over="ignore", invalid="ignore"):
            loss = T.mse_loss(model.forward(x), x)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(f"loss became {value} at step {step}", last_finite)
            T.backward(loss)
        if step == 0:
            sq = sum(float(np.sum(p.grad * p.grad)) for p in model.encoder_parameters())
            log.encoder_grad_norm_first_step = float(np.sqrt(sq))
        if warmup:
            opt.lr = lr * min(1.0, (step + 1) / warmup)
        opt.step()
        for p in params:
            p.grad = None  # frozen parameters also collect gradients
        last_finite = step
        model.steps_trained += 1
        log.record(step, value, time.perf_counter() - start)
        if checkpoint_every > 0 and checkpoint_dir is not None and (step + 1) % checkpoint_every == 0:
            path = Path(checkpoint_dir) / f"checkpoint_step{step + 1:07d}.npz"
            save_checkpoint(model, path, checkpoint_extra)
            log.checkpoints.append(str(path))
    for p in model.trainable_parameters:
        if not np.all(np.isfinite(p.data)):
            raise TrainingError(f"parameter {p.name} became non-finite", last_finite)
    log.final_checksum = model.checksum()
    return log


def save_checkpoint(model, path, extra=None):
    """Write parameters (little-endian float64) plus a JSON header to ``.npz``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": CHECKPOINT_FORMAT,
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "config": model.config(),
        "steps_trained": model.steps_trained,
        "parameters": [
            {"name": p.name, "shape": list(p.shape), "frozen": p.frozen} for p in model.parameters
        ],
        "checksum": model.checksum(),
    }
    if extra:
        meta["extra"] = extra
    arrays = {p.name: np.ascontiguousarray(p.data, dtype="<f8") for p in model.parameters}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def read_checkpoint_meta(path):
    try:
        with np.load(path, allow_pickle=False) as data:
            if "__meta__" not in data:
                raise ContractError(f"{path} is not a {CHECKPOINT_FORMAT} file")
            meta = json.loads(data["__meta__"].tobytes().decode())
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise ContractError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    return meta


def load_checkpoint(path):
    """Rebuild a HostModel from a checkpoint.

    The DDF is regenerated from its recorded seed and compared against the
    stored weights, so a checkpoint whose filter was tampered with (or came
    from a different generator) is rejected.
    """
    meta = read_checkpoint_meta(path)
    cfg = meta["config"]
    ddf_cfg = cfg.get("ddf")
    model = build_host(
        cfg["d"], cfg["with_ddf"], seed=cfg["seed"], image_size=cfg["image_size"],
        hidden=cfg["hidden"],
        n=ddf_cfg["n"] if ddf_cfg else None,
        bias_low=ddf_cfg["bias_low"] if ddf_cfg else DEFAULT_BIAS_RANGE[0],
        bias_high=ddf_cfg["bias_high"] if ddf_cfg else DEFAULT_BIAS_RANGE[1],
    )
    if ddf_cfg and ddf_cfg["seed"] != model.ddf.seed:
        model.ddf = ddf_init(
            ddf_cfg["d"], ddf_cfg["n"], ddf_cfg["seed"], ddf_cfg["bias_low"], ddf_cfg["bias_high"]
        )
    with np.load(path, allow_pickle=False) as data:
        for p in model.parameters:
            if p.name not in data:
                raise ContractError(f"checkpoint {path} lacks parameter {p.name}")
            stored = data[p.name]
            if stored.shape != p.shape:
                raise ContractError(
                    f"parameter {p.name}: checkpoint shape {stored.shape} != model {p.shape}"
                )
            if p.frozen:
                if not np.array_equal(stored, p.data):
                    raise ContractError(f"frozen parameter {p.name} does not match its seed")
            else:
                p.data[...] = stored
    model.steps_trained = int(meta.get("steps_trained", 0))
    return model

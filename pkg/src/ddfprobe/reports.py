"""On-disk artifacts: JSON documents, CSV tables and PPM image strips."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ContractError


def dumps_json(doc):
    # Stable key order and float repr make output byte-reproducible.
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(doc))
    return path


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ContractError(f"cannot read JSON document {path}: {exc}") from exc


@lru_cache(maxsize=None)
def load_schema(name):
    text = resources.files("ddfprobe.schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(doc, name):
    """Raise ContractError unless ``doc`` satisfies schema ``name``."""
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ContractError(f"{name} schema violation at {where}: {exc.message}") from exc
    return doc


def write_effect_csv(report, path):
    """Effect matrix as CSV: a header of factor names, one row per neuron."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(report.factors)]
    for row in report.effect_matrix:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def to_uint8(image):
    """(3, H, W) float image in [0, 1] -> (H, W, 3) uint8."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.round(arr.transpose(1, 2, 0) * 255.0).astype(np.uint8)


def write_ppm(path, image):
    """Binary P6 PPM of a (3, H, W) float image."""
    pixels = to_uint8(image)
    h, w, _ = pixels.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return path


def read_ppm(path):
    """Read a binary P6 PPM into an (H, W, 3) uint8 array."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P6" or int(tokens[3]) != 255:
        raise ContractError(f"{path} is not an 8-bit binary PPM")
    w, h = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(data[pos + 1:pos + 1 + w * h * 3], dtype=np.uint8)
    return pixels.reshape(h, w, 3)


def write_strips(report, directory, image_format="ppm"):
    """One file per neuron: its delta sweep on the first probe scene, left to right."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for profile in report.profiles:
        if profile.strip is None:
            raise ContractError(f"neuron {profile.neuron} has no image strip")
        stem = directory / f"neuron_{profile.neuron:04d}"
        if image_format == "ppm":
            paths.append(write_ppm(stem.with_suffix(".ppm"), profile.strip))
        elif image_format == "png":
            import matplotlib.pyplot as plt

            path = stem.with_suffix(".png")
            plt.imsave(path, to_uint8(profile.strip))
            paths.append(path)
        else:
            raise ContractError(f"unknown image format {image_format!r}")
    return paths


def write_loss_csv(log, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(log.to_csv())
    return path


def comparison_table(comparison):
    """Plain-text side-by-side summary of a comparison document."""
    a, b = comparison["baseline"], comparison["ddf"]
    rows = [
        ("", "baseline", "ddf"),
        ("model", a["model_id"], b["model_id"]),
        ("probe target", a["probe_target"], b["probe_target"]),
        ("neurons", a["n_neurons"], b["n_neurons"]),
        ("active", a["active_neurons"], b["active_neurons"]),
        ("score", f"{a['disentanglement_score']:.4f}", f"{b['disentanglement_score']:.4f}"),
    ]
    for label in ("continuous", "discrete", "redundant"):
        rows.append((label, a["counts"][label], b["counts"][label]))
    rows.append(("seeds", _fmt_seeds(a["seeds"]), _fmt_seeds(b["seeds"])))
    widths = [max(len(str(r[i])) for r in rows) for i in range(3)]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.append("")
    lines.append(
        f"score difference (ddf - baseline): {comparison['score_difference']:+.4f}"
        f" [{comparison['direction']}]"
    )
    lines.append("")
    lines.append("best neuron per factor (max |effect|):")
    for name, entry in comparison["best_neurons"].items():
        ba, bd = entry["baseline"], entry["ddf"]
        lines.append(
            f"  {name:<15} baseline #{ba['neuron']} ({ba['effect']:.3f})"
            f"   ddf #{bd['neuron']} ({bd['effect']:.3f})"
        )
    return "\n".join(lines) + "\n"


def _fmt_seeds(seeds):
    return ",".join(f"{k}={v}" for k, v in sorted(seeds.items()))

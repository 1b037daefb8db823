"""Monte Carlo statistics behind the ``hdc-demo`` command."""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .hdc import (
    BIPOLAR,
    HyperVector,
    bind,
    bundle,
    cosine,
    decode_value,
    encode_pairs,
    random_bipolar,
    random_codebook,
)

DEMO_SCHEMA_VERSION = 1
CAPACITY_PAIRS = (1, 2, 3, 5, 8, 12, 16)
CODEBOOK_SIZE = 64
DECODE_THRESHOLD = 0.15
ABSENT_THRESHOLD = 0.25


def sub_seed(seed, *path):
    return int(np.random.SeedSequence([seed, *path]).generate_state(1, dtype=np.uint64)[0])


def orthogonal_partner(a, seed):
    """A bipolar vector with dot(a, b) == 0 exactly (``a.dim`` must be even)."""
    d = a.dim
    if d % 2:
        raise ContractError("exactly orthogonal bipolar vectors need an even dimension")
    flips = np.ones(d)
    flips[np.random.default_rng(seed).permutation(d)[: d // 2]] = -1.0
    return HyperVector(a.values * flips, BIPOLAR)


def orthogonality(d, trials, seed, bins=41):
    cos = np.array(
        [
            cosine(random_bipolar(d, sub_seed(seed, 0, t, 0)), random_bipolar(d, sub_seed(seed, 0, t, 1)))
            for t in range(trials)
        ]
    )
    expected = 1.0 / np.sqrt(d)
    edges = np.linspace(-6 * expected, 6 * expected, bins + 1)
    counts, _ = np.histogram(np.clip(cos, edges[0], edges[-1]), bins=edges)
    return {
        "mean": float(cos.mean()),
        "std": float(cos.std(ddof=1)) if trials > 1 else 0.0,
        "expected_std": float(expected),
        "max_abs": float(np.abs(cos).max()),
        "histogram": {"edges": edges.tolist(), "counts": counts.tolist()},
    }


def bind_bundle_table(d, trials, seed):
    keys = ("bundle_vs_member", "bundle_vs_fresh", "bind_vs_first", "bind_vs_second")
    rows = {k: [] for k in keys}
    inverse_exact = True
    for t in range(trials):
        a = random_bipolar(d, sub_seed(seed, 1, t, 0))
        b = random_bipolar(d, sub_seed(seed, 1, t, 1))
        c = random_bipolar(d, sub_seed(seed, 1, t, 2))
        ab = bind(a, b)
        rows["bundle_vs_member"].append(cosine(bundle([a, b]), a))
        rows["bundle_vs_fresh"].append(cosine(bundle([a, b]), c))
        rows["bind_vs_first"].append(cosine(ab, a))
        rows["bind_vs_second"].append(cosine(ab, b))
        inverse_exact &= bool(np.array_equal(bind(ab, b).values, a.values))
    table = {
        k: {"mean": float(np.mean(v)), "max_abs": float(np.max(np.abs(v)))} for k, v in rows.items()
    }
    orth = None
    if d % 2 == 0:
        a = random_bipolar(d, sub_seed(seed, 4, 0))
        b = orthogonal_partner(a, sub_seed(seed, 4, 1))
        orth = cosine(bundle([a, b]), a)
    return {
        "similarities": table,
        "bind_inverse_exact": inverse_exact,
        "orthogonal_bundle_similarity": orth,
        "orthogonal_bundle_expected": float(1.0 / np.sqrt(2.0)),
    }


def pair_capacity(d, trials, seed, pair_counts=CAPACITY_PAIRS, codebook_size=CODEBOOK_SIZE,
                  threshold=DECODE_THRESHOLD):
    """Fraction of trials in which every key of a k-pair graph decodes correctly."""
    labels = [f"v{i}" for i in range(codebook_size)]
    out = []
    for k in pair_counts:
        if k > codebook_size:
            raise ContractError(f"cannot draw {k} distinct values from a {codebook_size}-entry codebook")
        ok = 0
        for t in range(trials):
            book = random_codebook(labels, d, sub_seed(seed, 2, k, t, 0))
            rng = np.random.default_rng(sub_seed(seed, 2, k, t, 1))
            picks = rng.choice(codebook_size, size=k, replace=False)
            keys = [random_bipolar(d, sub_seed(seed, 2, k, t, 2, i)) for i in range(k)]
            g = encode_pairs([(key, book.vectors[j]) for key, j in zip(keys, picks)])
            ok += all(
                decode_value(g, key, book, threshold) == labels[j] for key, j in zip(keys, picks)
            )
        out.append({"pairs": int(k), "accuracy": ok / trials})
    return out


def absent_key_rate(d, trials, seed, pairs=5, codebook_size=CODEBOOK_SIZE,
                    threshold=ABSENT_THRESHOLD):
    """Fraction of trials in which an unused key decodes to nothing."""
    labels = [f"v{i}" for i in range(codebook_size)]
    none = 0
    for t in range(trials):
        book = random_codebook(labels, d, sub_seed(seed, 3, t, 0))
        keys = [random_bipolar(d, sub_seed(seed, 3, t, 1, i)) for i in range(pairs)]
        g = encode_pairs([(key, book.vectors[i]) for i, key in enumerate(keys)])
        stranger = random_bipolar(d, sub_seed(seed, 3, t, 2))
        none += decode_value(g, stranger, book, threshold) is None
    return none / trials


def demo_statistics(d, trials, seed, capacity_trials=None):
    if d < 2:
        raise ContractError(f"hdc-demo needs d >= 2, got {d}")
    if trials < 1:
        raise ContractError(f"hdc-demo needs trials >= 1, got {trials}")
    capacity_trials = trials if capacity_trials is None else capacity_trials
    return {
        "schema_version": DEMO_SCHEMA_VERSION,
        "kind": "hdc_demo",
        "d": int(d),
        "trials": int(trials),
        "seed": int(seed),
        "orthogonality": orthogonality(d, trials, seed),
        "bind_bundle": bind_bundle_table(d, trials, seed),
        "capacity": {
            "codebook_size": CODEBOOK_SIZE,
            "threshold": DECODE_THRESHOLD,
            "trials": int(capacity_trials),
            "sweep": pair_capacity(d, capacity_trials, seed),
            "absent_key_none_rate": absent_key_rate(d, capacity_trials, seed),
            "absent_threshold": ABSENT_THRESHOLD,
        },
    }


def demo_text(stats):
    o, bb, cap = stats["orthogonality"], stats["bind_bundle"], stats["capacity"]
    lines = [
        f"d = {stats['d']}, trials = {stats['trials']}, seed = {stats['seed']}",
        "",
        "random pair cosine:",
        f"  mean {o['mean']:+.5f}   std {o['std']:.5f} (1/sqrt(d) = {o['expected_std']:.5f})"
        f"   max |cos| {o['max_abs']:.5f}",
        "",
        "bind / bundle (mean cosine, max |cosine|):",
    ]
    for name, row in bb["similarities"].items():
        lines.append(f"  {name:<18} {row['mean']:+.4f}  {row['max_abs']:.4f}")
    lines.append(f"  bind inverse exact: {bb['bind_inverse_exact']}")
    if bb["orthogonal_bundle_similarity"] is not None:
        lines.append(
            f"  orthogonal bundle: {bb['orthogonal_bundle_similarity']:.12f}"
            f" (1/sqrt(2) = {bb['orthogonal_bundle_expected']:.12f})"
        )
    lines += ["", f"pair capacity ({cap['codebook_size']}-entry codebook, threshold {cap['threshold']}):"]
    for row in cap["sweep"]:
        lines.append(f"  {row['pairs']:>3} pairs  {row['accuracy']:.3f}")
    lines.append(f"  unknown key -> none: {cap['absent_key_none_rate']:.3f}")
    return "\n".join(lines) + "\n"

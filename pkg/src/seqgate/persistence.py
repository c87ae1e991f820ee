"""Versioned model bundle persistence.

A bundle is a single .npz file holding a JSON metadata record (format tag,
version, hyperparameters, vocab hash) plus every parameter tensor as a
shape-tagged float64/int64 array. Loading reproduces scores bit-exactly;
a format/version mismatch or vocab-hash mismatch is rejected.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .archetypes import ArchetypeModel
from .data import DISCRETE, ItemVocab
from .errors import DataError
from .gate import DistanceDistribution
from .hybrid import GatedHybridPredictor, PopularityPrior
from .lstm import LSTMBackbone

BUNDLE_FORMAT = "seqgate-bundle"
BUNDLE_VERSION = 1


def _vocab_hash(vocab: ItemVocab | None) -> str:
    if vocab is None:
        return ""
    joined = "\x1f".join(str(r) for r in vocab.reverse)
    return hashlib.sha256(joined.encode()).hexdigest()


def _counts_to_coo(counts):
    rows, cols, vals = [], [], []
    for i, row in counts.items():
        for j, c in row.items():
            rows.append(i)
            cols.append(j)
            vals.append(c)
    return (
        np.asarray(rows, dtype=np.int64),
        np.asarray(cols, dtype=np.int64),
        np.asarray(vals, dtype=np.float64),
    )


def save_bundle(predictor: GatedHybridPredictor, path) -> Path:
    """Persist a fitted predictor to one versioned bundle file."""
    predictor._require_fitted()
    path = Path(path)
    arrays = {}
    meta = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "mode": predictor.mode_,
        "n_items": predictor.n_items_,
        "params": predictor.get_params(),
        "vocab_hash": _vocab_hash(getattr(predictor, "vocab_", None)),
        "loss_history": predictor.backbone_.loss_history_,
    }
    for name, tensor in predictor.backbone_.param_dict().items():
        arrays[f"backbone/{name}"] = tensor
    arch = predictor.archetypes_
    arrays["archetypes/centroids"] = arch.centroids_
    if predictor.mode_ == DISCRETE:
        for k in range(arch.n_archetypes):
            r, c, v = _counts_to_coo(arch.transition_counts_[k])
            arrays[f"archetypes/counts{k}/row"] = r
            arrays[f"archetypes/counts{k}/col"] = c
            arrays[f"archetypes/counts{k}/val"] = v
        arrays["popularity"] = predictor.popularity_.scores
    else:
        arrays["archetypes/pattern_means"] = arch.pattern_means_
        meta["global_mean"] = arch.global_mean_
    arrays["distribution/dmins"] = predictor.distribution_.sorted_dmins
    if getattr(predictor, "vocab_", None) is not None:
        arrays["vocab/raw"] = np.asarray(
            [str(r) for r in predictor.vocab_.reverse], dtype=np.str_
        )
        meta["vocab_raw_int"] = all(isinstance(r, int) for r in predictor.vocab_.reverse)
    if getattr(predictor, "norm_stats_", None) is not None:
        arrays["norm_stats"] = np.asarray(predictor.norm_stats_, dtype=np.float64)
    arrays["__meta__"] = np.array(json.dumps(meta))
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_bundle(path) -> GatedHybridPredictor:
    """Load a bundle saved by save_bundle; rejects unknown versions."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"bundle not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise DataError("not a model bundle (missing metadata)")
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != BUNDLE_FORMAT or meta.get("version") != BUNDLE_VERSION:
            raise DataError(
                f"unsupported bundle format/version: "
                f"{meta.get('format')!r} v{meta.get('version')!r}"
            )
        arrays = {k: data[k] for k in data.files if k != "__meta__"}

    params = meta["params"]
    predictor = GatedHybridPredictor(**params)
    mode = meta["mode"]
    predictor.mode_ = mode
    predictor.n_items_ = int(meta["n_items"])

    backbone = LSTMBackbone(
        embed_dim=params["embed_dim"],
        hidden_dim=params["hidden_dim"],
        epochs=params["epochs"],
        batch_size=params["batch_size"],
        learning_rate=params["learning_rate"],
        seed=params["seed"],
        mode=mode,
        clip_norm=params["clip_norm"],
        optimizer=params["optimizer"],
    )
    backbone.n_items_ = predictor.n_items_
    backbone.params_ = {
        name.split("/", 1)[1]: arrays[name]
        for name in arrays
        if name.startswith("backbone/")
    }
    backbone.loss_history_ = list(meta.get("loss_history", []))
    predictor.backbone_ = backbone

    arch = ArchetypeModel(
        n_archetypes=params["n_archetypes"],
        alpha=params["alpha"],
        seed=params["seed"],
        max_iters=params["kmeans_max_iters"],
        tol=params["kmeans_tol"],
    )
    arch.mode_ = mode
    arch.centroids_ = arrays["archetypes/centroids"]
    arch.inertia_history_ = []
    if mode == DISCRETE:
        arch.n_items_ = predictor.n_items_
        counts, totals = [], []
        for k in range(params["n_archetypes"]):
            rows = arrays[f"archetypes/counts{k}/row"]
            cols = arrays[f"archetypes/counts{k}/col"]
            vals = arrays[f"archetypes/counts{k}/val"]
            cdict: dict = {}
            tdict: dict = {}
            for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
                cdict.setdefault(i, {})[j] = v
                tdict[i] = tdict.get(i, 0.0) + v
            counts.append(cdict)
            totals.append(tdict)
        arch.transition_counts_ = counts
        arch.row_totals_ = totals
        predictor.popularity_ = PopularityPrior(arrays["popularity"])
    else:
        arch.pattern_means_ = arrays["archetypes/pattern_means"]
        arch.global_mean_ = float(meta["global_mean"])
        predictor.popularity_ = None
    predictor.archetypes_ = arch
    predictor.distribution_ = DistanceDistribution(arrays["distribution/dmins"])

    if "vocab/raw" in arrays:
        raw = arrays["vocab/raw"].tolist()
        # verify integrity against the stored string forms before any coercion
        as_strings = ItemVocab({r: i for i, r in enumerate(raw)}, tuple(raw))
        if _vocab_hash(as_strings) != meta["vocab_hash"]:
            raise DataError("vocabulary hash mismatch: bundle is corrupt")
        if meta.get("vocab_raw_int"):
            raw = [int(r) for r in raw]
        predictor.vocab_ = ItemVocab({r: i for i, r in enumerate(raw)}, tuple(raw))
    if "norm_stats" in arrays:
        predictor.norm_stats_ = tuple(arrays["norm_stats"].tolist())
    return predictor

"""JSON model files for merging models and the CART baseline."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .baseline import CartModel, Split
from .model import DesignTable, FittedModel, FittedPiece, Grid, Kernel, RankRect

FORMAT = "segmerge-model"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def model_to_dict(model) -> dict:
    if isinstance(model, CartModel):
        nodes = []
        for nd in model.nodes:
            if isinstance(nd, Split):
                nodes.append({"feature": nd.feature, "threshold": nd.threshold, "left": nd.left, "right": nd.right})
            else:
                nodes.append({"value": nd})
        return {"format": FORMAT, "version": VERSION, "type": "cart", "d": model.d, "splits": nodes}
    if not isinstance(model, FittedModel):
        raise TypeError(f"cannot serialise {type(model).__name__}")
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "type": "merging",
        "d": model.d,
        "d_prime": model.d_prime,
        "n": model.grid.n,
        "n_padded": model.grid.n_padded,
        "kernel": model.kernel.kind,
        "fallback": model.fallback,
        "boundaries": model.grid.boundaries.tolist(),
        "pieces": [
            {
                "lo": list(p.rect.lo),
                "hi": list(p.rect.hi),
                "level": p.rect.level,
                "theta": p.theta.tolist(),
                "sse": p.sse,
                "count": p.count,
                "effective_rank": p.effective_rank,
            }
            for p in model.pieces
        ],
    }
    if model.design is not None:
        doc["design"] = {"coords": model.design.coords.tolist(), "ranks": model.design.ranks.tolist()}
    return doc


def model_from_dict(doc: dict):
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError("not a segmerge model file")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    kind = doc.get("type")
    try:
        if kind == "cart":
            nodes = tuple(
                Split(int(nd["feature"]), float(nd["threshold"]), int(nd["left"]), int(nd["right"]))
                if "feature" in nd
                else float(nd["value"])
                for nd in doc["splits"]
            )
            return CartModel(nodes, int(doc["d"]))
        if kind == "merging":
            grid = Grid(np.array(doc["boundaries"], dtype=float), n=int(doc["n"]))
            if grid.n_padded != doc["n_padded"] or grid.d_prime != doc["d_prime"]:
                raise ModelFormatError("boundary arrays disagree with n_padded / d_prime")
            pieces = tuple(
                FittedPiece(
                    RankRect(tuple(p["lo"]), tuple(p["hi"]), int(p["level"])),
                    np.array(p["theta"], dtype=float),
                    float(p["sse"]),
                    int(p["count"]),
                    int(p["effective_rank"]),
                )
                for p in doc["pieces"]
            )
            design = None
            if "design" in doc:
                dd = doc["design"]
                dp = grid.d_prime
                design = DesignTable(
                    np.array(dd["coords"], dtype=float).reshape(-1, dp),
                    np.array(dd["ranks"], dtype=np.int64).reshape(-1, dp),
                )
            return FittedModel(pieces, grid, Kernel(doc["kernel"]), int(doc["d"]), doc["fallback"], design=design)
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None
    raise ModelFormatError(f"unknown model type {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(doc)

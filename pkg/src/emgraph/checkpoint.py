"""Versioned JSON checkpoints with exact float round-trip.

Every float is stored as ``float.hex()`` text, so a reloaded state continues
a run bit-for-bit.  Layout (version 1):

    {"format": "emgraph-state", "version": 1,
     "iteration": int,
     "grid": [hex...],
     "params": {"layers": [[tensor, tensor], ...], "head": tensor|null},
     "p_mass": [hex...] | null,
     "best": {"params": ..., "val": hex, "iteration": int} | null,
     "rng_state": numpy bit-generator state dict,
     "pretrain_losses": [hex...],
     "history": [{"iteration": int, "grid_losses": [hex...],
                  "p_mass": [hex...], "epoch_losses": [hex...],
                  "train_loss": hex, "val_metric": hex,
                  "test_metric": hex}, ...]}

where ``tensor`` is {"shape": [rows, cols], "data": [hex...]} in row-major
order.
"""
from __future__ import annotations

import json
import math

import numpy as np

from .distributions import DiscreteDistribution, ParamGrid
from .errors import DataError
from .model import ModelParams
from .tensor import Tensor
from .training import IterationRecord, TrainState

FORMAT = "emgraph-state"
VERSION = 1


def _hex(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x.hex()


def _unhex(s: str) -> float:
    if s == "nan":
        return float("nan")
    if s in ("inf", "-inf"):
        return float(s)
    return float.fromhex(s)


def _hex_list(arr) -> list[str]:
    return [_hex(v) for v in np.asarray(arr, dtype=np.float64).ravel()]


def _unhex_array(items, shape=None) -> np.ndarray:
    arr = np.array([_unhex(s) for s in items], dtype=np.float64)
    return arr.reshape(shape) if shape is not None else arr


def _tensor_to_json(t: Tensor) -> dict:
    return {"shape": [t.rows, t.cols], "data": _hex_list(t.data)}


def _tensor_from_json(obj) -> Tensor:
    return Tensor(_unhex_array(obj["data"], tuple(obj["shape"])))


def _params_to_json(params: ModelParams) -> dict:
    return {
        "layers": [[_tensor_to_json(a), _tensor_to_json(b)]
                   for a, b in params.layers],
        "head": None if params.head is None else _tensor_to_json(params.head),
    }


def _params_from_json(obj) -> ModelParams:
    layers = tuple((_tensor_from_json(a), _tensor_from_json(b))
                   for a, b in obj["layers"])
    head = None if obj["head"] is None else _tensor_from_json(obj["head"])
    return ModelParams(layers=layers, head=head)


def _record_to_json(r: IterationRecord) -> dict:
    return {
        "iteration": r.iteration,
        "grid_losses": _hex_list(r.grid_losses),
        "p_mass": _hex_list(r.p_mass),
        "epoch_losses": [_hex(v) for v in r.epoch_losses],
        "train_loss": _hex(r.train_loss),
        "val_metric": _hex(r.val_metric),
        "test_metric": _hex(r.test_metric),
    }


def _record_from_json(obj) -> IterationRecord:
    return IterationRecord(
        iteration=int(obj["iteration"]),
        grid_losses=_unhex_array(obj["grid_losses"]),
        p_mass=_unhex_array(obj["p_mass"]),
        epoch_losses=[_unhex(v) for v in obj["epoch_losses"]],
        train_loss=_unhex(obj["train_loss"]),
        val_metric=_unhex(obj["val_metric"]),
        test_metric=_unhex(obj["test_metric"]),
    )


def save_state(state: TrainState, grid: ParamGrid, sink) -> None:
    best = None
    if state.best_params is not None:
        best = {
            "params": _params_to_json(state.best_params),
            "val": _hex(state.best_val),
            "iteration": state.best_iteration,
        }
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "iteration": state.iteration,
        "grid": _hex_list(grid.values),
        "params": _params_to_json(state.params),
        "p_mass": None if state.p_t is None else _hex_list(state.p_t.mass),
        "best": best,
        "rng_state": state.rng.bit_generator.state,
        "pretrain_losses": [_hex(v) for v in state.pretrain_losses],
        "history": [_record_to_json(r) for r in state.history],
    }
    text = json.dumps(doc, indent=None, separators=(",", ":"), sort_keys=True)
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)


def load_state(source) -> tuple[TrainState, ParamGrid]:
    if hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    if doc.get("format") != FORMAT:
        raise DataError("not an emgraph checkpoint")
    if doc.get("version") != VERSION:
        raise DataError(f"unsupported checkpoint version {doc.get('version')}")
    grid = ParamGrid(_unhex_array(doc["grid"]))
    p_t = None
    if doc["p_mass"] is not None:
        p_t = DiscreteDistribution(grid, _unhex_array(doc["p_mass"]))
    rng = np.random.default_rng()
    rng.bit_generator.state = doc["rng_state"]
    state = TrainState(
        params=_params_from_json(doc["params"]),
        p_t=p_t,
        iteration=int(doc["iteration"]),
        history=[_record_from_json(r) for r in doc["history"]],
        rng=rng,
        pretrain_losses=[_unhex(v) for v in doc["pretrain_losses"]],
    )
    if doc["best"] is not None:
        state.best_params = _params_from_json(doc["best"]["params"])
        state.best_val = _unhex(doc["best"]["val"])
        state.best_iteration = doc["best"]["iteration"]
    return state, grid

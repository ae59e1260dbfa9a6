"""JSON and CSV persistence for identified models, controllers and gain matrices."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .control import ImcController, PController, design_imc
from .core import OperatingPoint
from .datasets import BUILTIN_MODELS
from .dynamics import ScalarSurrogate
from .ident import FitReport, IdentifiedModel
from .kernelmap import CrossGain

BUILTIN_PREFIX = "builtin:"


class SchemaError(ValueError):
    pass


def dump_json(data: dict, path: str | Path) -> None:
    """Stable, byte-reproducible JSON (sorted keys, repr floats, trailing newline)."""
    text = json.dumps(data, indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    return data


def _require(data: dict, keys, what: str) -> None:
    missing = [k for k in keys if k not in data]
    if missing:
        raise SchemaError(f"{what} is missing key(s): {', '.join(missing)}")


def _matrix(value, what: str) -> np.ndarray:
    try:
        m = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(f"{what} is not a numeric matrix") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise SchemaError(f"{what} must be a square matrix, got shape {m.shape}")
    return m


# ---------------------------------------------------------------------------
# identified model


def model_to_dict(model: IdentifiedModel) -> dict:
    s = model.surrogate
    out = {
        "L": s.L,
        "d": model.d,
        "Ts": model.Ts,
        "c0": s.c0,
        "c1": s.c1,
        "b0": s.b0,
        "b1": s.b1,
        "H": model.H.H.tolist(),
        "provenance": model.H.provenance,
    }
    if model.fit is not None:
        out["fit"] = model.fit.to_dict()
    if model.op is not None:
        out["operating_point"] = model.op.to_dict()
    return out


def model_from_dict(data: dict) -> IdentifiedModel:
    _require(data, ("L", "d", "Ts", "c0", "c1", "H"), "model JSON")
    try:
        s = ScalarSurrogate(
            L=float(data["L"]),
            b0=float(data.get("b0", data["c0"])),
            b1=float(data.get("b1", 0.0)),
            c0=float(data["c0"]),
            c1=float(data["c1"]),
        )
        H = CrossGain(_matrix(data["H"], "model H"), data.get("provenance", "identified"))
        op = None
        if "operating_point" in data:
            op = OperatingPoint.from_dict(data["operating_point"])
    except (TypeError, KeyError) as exc:
        raise SchemaError(f"model JSON: {exc}") from None
    fit = None
    if "fit" in data:
        f = data["fit"]
        r2 = [math.nan if v is None else float(v) for v in f.get("r2", [])]
        fit = FitReport(np.array(f.get("rmse", []), dtype=float), np.array(r2), np.zeros((0, 0)))
    return IdentifiedModel(s, int(data["d"]), float(data["Ts"]), H, fit, op)


def builtin_model(name: str) -> IdentifiedModel:
    if name not in BUILTIN_MODELS:
        raise SchemaError(f"unknown builtin model {name!r}; choose from {sorted(BUILTIN_MODELS)}")
    surrogate, gain, op = (f() for f in BUILTIN_MODELS[name])
    Ts = 0.01
    d = int(round(surrogate.L / Ts))
    return IdentifiedModel(surrogate, d, Ts, gain, None, op)


def load_model(ref: str | Path) -> IdentifiedModel:
    """Model JSON path, gain-matrix CSV path, or ``builtin:<name>``."""
    ref = str(ref)
    if ref.startswith(BUILTIN_PREFIX):
        return builtin_model(ref[len(BUILTIN_PREFIX) :])
    if ref.lower().endswith(".csv"):
        H = read_gain_csv(ref)
        # a bare matrix carries no dynamics; attach the reference surrogate
        base = builtin_model("cfd")
        return IdentifiedModel(base.surrogate, base.d, base.Ts, H, None, None)
    return model_from_dict(load_json(ref))


def save_model(model: IdentifiedModel, path: str | Path) -> None:
    dump_json(model_to_dict(model), path)


# ---------------------------------------------------------------------------
# gain matrix CSV


def write_gain_csv(H: CrossGain, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in H.H:
            writer.writerow([repr(float(v)) for v in row])


def read_gain_csv(path: str | Path, provenance: str = "identified") -> CrossGain:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        m = [[float(c) for c in r] for r in rows]
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    return CrossGain(_matrix(m, f"{path}"), provenance)


# ---------------------------------------------------------------------------
# controllers


def controller_to_dict(ctrl: PController | ImcController) -> dict:
    if isinstance(ctrl, PController):
        return {"type": "p", "beta": ctrl.beta, "K_P": ctrl.K_P.tolist()}
    return {
        "type": "imc",
        "lambda": ctrl.lam,
        "floor_fraction": ctrl.floor_fraction,
        "realization": ctrl.realization,
        "D": ctrl.D.tolist(),
    }


def controller_from_dict(data: dict, model: IdentifiedModel) -> PController | ImcController:
    """Rebuild a controller; IMC designs are re-derived from ``model`` and cross-checked."""
    _require(data, ("type",), "controller JSON")
    kind = data["type"]
    if kind == "p":
        _require(data, ("beta", "K_P"), "P controller JSON")
        K = _matrix(data["K_P"], "K_P")
        if K.shape[0] != model.H.n:
            raise SchemaError("controller and model sizes differ")
        return PController(K, float(data["beta"]))
    if kind == "imc":
        _require(data, ("lambda", "floor_fraction", "D"), "IMC controller JSON")
        ctrl = design_imc(
            model.H,
            model.surrogate,
            float(data["lambda"]),
            float(data["floor_fraction"]),
            data.get("realization", "zoh"),
        )
        stored = _matrix(data["D"], "D")
        if stored.shape != ctrl.D.shape or not np.allclose(stored, ctrl.D, rtol=1e-9, atol=0):
            raise SchemaError("stored IMC post-compensator does not match the model's gain matrix")
        return ctrl
    raise SchemaError(f"unknown controller type {kind!r}")


def save_controller(ctrl: PController | ImcController, path: str | Path) -> None:
    dump_json(controller_to_dict(ctrl), path)


def jsonable(value: Any) -> Any:
    """Convert numpy containers and non-finite floats to plain JSON values."""
    if isinstance(value, dict):
        return {k: jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, np.integer):
        return int(value)
    return value

"""Serialization: model.json, CSV tables and weight files.

Floats are written with 17 significant digits so every value round-trips
exactly.  Output never embeds timestamps, so repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import InputError
from .market import MarketModel, check_simplex

MODEL_SCHEMA = "ntsmarket.model/1"
PathLike = Union[str, Path]


def fmt(x: Any) -> str:
    """Text form of a CSV cell."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(x)


def _json_value(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return "null"
        return format(v, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_value(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_json_value(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _json_value(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj: Any, indent: int = 2) -> str:
    return _json_value(obj, indent, 0) + "\n"


def write_json(path: PathLike, obj: Any) -> None:
    Path(path).write_text(dumps_json(obj))


def read_json(path: PathLike) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


# ---------------------------------------------------------------------------
# model.json


def model_to_dict(m: MarketModel, metadata: Optional[dict] = None) -> dict:
    assets = list(m.assets) if m.assets else [f"A{i + 1}" for i in range(m.n_assets)]
    return {
        "schema": MODEL_SCHEMA,
        "alpha": m.alpha,
        "theta": m.theta,
        "assets": assets,
        "mu": m.mu,
        "sigma": m.sigma,
        "beta": m.beta,
        "cov": m.cov.ravel(),
        "metadata": metadata or {},
    }


def model_from_dict(d: dict, source: str = "model") -> tuple[MarketModel, dict]:
    if not isinstance(d, dict) or d.get("schema") != MODEL_SCHEMA:
        raise InputError(f"{source}: missing or unsupported schema tag (expected {MODEL_SCHEMA!r})")
    try:
        assets = [str(a) for a in d["assets"]]
        n = len(assets)
        cov = np.asarray(d["cov"], dtype=float)
        if cov.size != n * n:
            raise InputError(f"{source}: cov has {cov.size} entries, expected {n * n}")
        m = MarketModel(
            alpha=float(d["alpha"]),
            theta=float(d["theta"]),
            beta=np.asarray(d["beta"], dtype=float),
            mu=np.asarray(d["mu"], dtype=float),
            sigma=np.asarray(d["sigma"], dtype=float),
            cov=cov.reshape(n, n),
            assets=tuple(assets),
        )
    except KeyError as exc:
        raise InputError(f"{source}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"{source}: {exc}") from None
    return m, dict(d.get("metadata") or {})


def save_model(path: PathLike, m: MarketModel, metadata: Optional[dict] = None) -> None:
    write_json(path, model_to_dict(m, metadata))


def load_model(path: PathLike) -> tuple[MarketModel, dict]:
    return model_from_dict(read_json(path), str(path))


# ---------------------------------------------------------------------------
# CSV tables


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([fmt(v) for v in row])


def _parse_cell(text: str) -> Any:
    t = text.strip()
    if t in ("true", "false"):
        return t == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def read_table(path: PathLike) -> tuple[list[str], list[list[Any]]]:
    """Read a CSV written by :func:`write_csv`; numeric cells come back as numbers."""
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    if not rows:
        raise InputError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise InputError(f"{path}: row {i}: expected {len(header)} columns, found {len(r)}")
    return header, [[_parse_cell(c) for c in r] for r in body]


def read_weights(path: PathLike, assets: Sequence[str]) -> np.ndarray:
    """Read ``asset,weight`` rows and order them like ``assets``."""
    header, rows = read_table(path)
    if [h.strip().lower() for h in header[:2]] != ["asset", "weight"]:
        raise InputError(f"{path}: header must start with 'asset,weight'")
    found: dict[str, float] = {}
    for i, r in enumerate(rows, start=2):
        name = str(r[0])
        if not isinstance(r[1], (int, float)) or isinstance(r[1], bool):
            raise InputError(f"{path}: row {i}, column 2: not a number: {r[1]!r}")
        if name in found:
            raise InputError(f"{path}: row {i}: duplicate asset {name!r}")
        found[name] = float(r[1])
    missing = [a for a in assets if a not in found]
    extra = [a for a in found if a not in assets]
    if missing or extra:
        raise InputError(f"{path}: asset mismatch (missing {missing}, unknown {extra})")
    w = np.array([found[a] for a in assets])
    try:
        return check_simplex(w, tol=1e-8)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def write_weights(path: PathLike, assets: Sequence[str], w) -> None:
    write_csv(path, ["asset", "weight"], zip(assets, np.asarray(w, dtype=float)))


__all__ = [
    "MODEL_SCHEMA",
    "dumps_json",
    "write_json",
    "read_json",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "write_csv",
    "read_table",
    "read_weights",
    "write_weights",
]

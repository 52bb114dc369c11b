"""CSV/JSON artifacts: versioned headers, fixed number formatting, atomic writes."""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .nonlin import resolve_model
from .problem import DIRICHLET, ROBIN, SolutionProfile

FORMAT_VERSION = "v1"
TAG = "nep-phaseplane"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if x is None:
        return "nan"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def header(command: str) -> str:
    return f"# {TAG} {FORMAT_VERSION} {command}\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON with sorted keys; non-finite floats become null."""
    return json.dumps(_finite(obj), sort_keys=True, default=_json_default)


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    return obj


def write_atomic(path: str | Path, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def table(command: str, columns: list[str], rows, meta: dict | None = None) -> str:
    parts = [header(command)]
    if meta is not None:
        parts.append(f"# meta {dumps(meta)}\n")
    parts.append(",".join(columns) + "\n")
    for row in rows:
        parts.append(",".join(fmt(v) for v in row) + "\n")
    return "".join(parts)


def read_table(path: str | Path) -> tuple[str, dict, list[str], np.ndarray]:
    """(command, meta, column names, data) from a file written by :func:`table`."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    if not lines or not lines[0].startswith(f"# {TAG} "):
        raise ValueError(f"{path}: missing '# {TAG} {FORMAT_VERSION} <command>' header")
    head = lines[0].split()
    if head[2] != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {head[2]}")
    command = head[3] if len(head) > 3 else ""
    meta: dict = {}
    k = 1
    while k < len(lines) and lines[k].startswith("#"):
        if lines[k].startswith("# meta "):
            meta = json.loads(lines[k][len("# meta "):])
        k += 1
    columns = lines[k].split(",")
    body = [[float(c) for c in ln.split(",")] for ln in lines[k + 1:] if ln.strip()]
    data = np.array(body, dtype=float).reshape(-1, len(columns))
    return command, meta, columns, data


# -- profiles -----------------------------------------------------------------


def profile_meta(profile: SolutionProfile, model_spec: str | None = None) -> dict:
    meta = {
        "class": profile.cls,
        "C": profile.C,
        "lambda": profile.lam,
        "alpha": profile.alpha,
        "bc": profile.bc,
        "model": model_spec or profile.model_name,
        "L": profile.L,
        "u_max": profile.u_max,
    }
    meta.update({k: v for k, v in profile.meta.items() if k not in meta})
    return meta


def profile_text(profile: SolutionProfile, model_spec: str | None = None) -> str:
    rows = zip(profile.x, profile.u, profile.v)
    return table("solve", ["x", "u", "v"], rows, profile_meta(profile, model_spec))


def write_profile(path: str | Path, profile: SolutionProfile, model_spec: str | None = None) -> None:
    write_atomic(path, profile_text(profile, model_spec))


def read_profile(path: str | Path, model_spec: str | None = None) -> SolutionProfile:
    """Load a profile; the model comes from ``model_spec`` or the file's metadata."""
    _, meta, columns, data = read_table(path)
    if columns[:3] != ["x", "u", "v"]:
        raise ValueError(f"{path}: expected columns x,u,v")
    model = resolve_model(model_spec or meta["model"])
    bc = meta.get("bc", ROBIN)
    extra = {k: v for k, v in meta.items() if k not in ("class", "C", "lambda", "alpha", "bc", "model", "L", "u_max")}
    return SolutionProfile(
        x=data[:, 0], u=data[:, 1], v=data[:, 2],
        C=math.nan if meta.get("C") is None else float(meta["C"]),
        cls=meta.get("class", "none"), lam=float(meta["lambda"]),
        alpha=None if bc == DIRICHLET else float(meta["alpha"]),
        model=model, bc=bc, meta=extra,
    )

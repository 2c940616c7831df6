"""Report emission (deterministic JSON, CSV tables, manifest) and run comparison."""
from __future__ import annotations

import csv
import json
import math
import os
import platform

import numpy as np
import scipy

from .. import __version__, kernels
from ..certs import Certificate
from ..linalg import PsdOperator


class ManifestMismatch(ValueError):
    pass


def sourced(source, **values) -> dict:
    """Group of numbers sharing one formula or oracle id."""
    return {"source": source, "values": values}


def to_plain(obj):
    """Recursively convert to JSON-native types; non-finite floats become strings."""
    if isinstance(obj, Certificate):
        return to_plain(obj.to_json())
    if isinstance(obj, PsdOperator):
        return obj.to_json()
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def dumps(obj) -> str:
    return json.dumps(to_plain(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj))


def write_table(path, rows):
    """CSV with the union of keys in first-seen order."""
    if not rows:
        return
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: to_plain(v) for k, v in r.items()})


def manifest(cfg, chash) -> dict:
    return {"tool": "slsbounds", "version": __version__, "command": cfg["command"],
            "seeds": list(cfg["seeds"]), "config_sha256": chash, "kernel_backend": kernels.BACKEND,
            "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


# --------------------------------------------------------------------------
# comparison


def _flatten(obj, prefix="", out=None):
    out = {} if out is None else out
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(v, f"{prefix}/{k}", out)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _flatten(v, f"{prefix}[{i}]", out)
    else:
        out[prefix or "/"] = obj
    return out


def _load(d, name):
    p = os.path.join(d, name)
    if not os.path.exists(p):
        raise ManifestMismatch(f"{p} is missing")
    with open(p) as fh:
        return json.load(fh)


def compare_runs(dir_a, dir_b, rel_tol=1e-12) -> dict:
    """Field-wise diff of two run directories.

    Each differing field gets a class: ``rounding`` (relative difference at
    most ``rel_tol``), ``numeric``, ``value`` (non-numeric) or ``missing``.
    Identical fields are not listed.
    """
    ma, mb = _load(dir_a, "manifest.json"), _load(dir_b, "manifest.json")
    if ma.get("command") != mb.get("command"):
        raise ManifestMismatch(f"commands differ: {ma.get('command')} vs {mb.get('command')}")
    header = {"command": ma["command"], "version_a": ma.get("version"),
              "version_b": mb.get("version"),
              "version_mismatch": ma.get("version") != mb.get("version"),
              "config_a": ma.get("config_sha256"), "config_b": mb.get("config_sha256"),
              "same_config": ma.get("config_sha256") == mb.get("config_sha256")}
    fa = _flatten(_load(dir_a, "report.json"))
    fb = _flatten(_load(dir_b, "report.json"))
    diffs = []
    for path in sorted(set(fa) | set(fb)):
        if path not in fa or path not in fb:
            diffs.append({"path": path, "a": fa.get(path), "b": fb.get(path), "class": "missing"})
            continue
        a, b = fa[path], fb[path]
        if a == b and type(a) is type(b):
            continue
        num = (isinstance(a, (int, float)) and isinstance(b, (int, float))
               and not isinstance(a, bool) and not isinstance(b, bool))
        if num:
            ad = abs(a - b)
            rd = ad / max(abs(a), abs(b), 1e-300)
            diffs.append({"path": path, "a": a, "b": b, "abs": ad, "rel": rd,
                          "class": "rounding" if rd <= rel_tol else "numeric"})
        else:
            diffs.append({"path": path, "a": a, "b": b, "class": "value"})
    return {"header": header, "diffs": diffs, "identical": not diffs}

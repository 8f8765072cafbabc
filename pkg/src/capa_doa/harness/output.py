"""Deterministic text output: 12 significant digits, atomic writes, meta sidecars."""

import json
import os
import tempfile

import numpy as np

from .. import __version__


def fmt(x):
    """Format a number with 12 significant digits; non-finite values as ``inf``/``-inf``/``nan``."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def round_json(obj):
    """Recursively round floats to 12 significant digits for stable JSON."""
    if isinstance(obj, dict):
        return {str(k): round_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_json(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            return fmt(x)
        return float(f"{x:.12g}")
    if isinstance(obj, np.ndarray):
        return round_json(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_text(path, text):
    """Write UTF-8 text atomically (temp file in the same directory, then rename)."""
    path = os.path.abspath(path)
    directory = os.path.dirname(path)
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def json_text(obj):
    return json.dumps(round_json(obj), indent=2, sort_keys=True) + "\n"


def write_csv(path, header, rows):
    write_text(path, csv_text(header, rows))


def write_json(path, obj):
    write_text(path, json_text(obj))


def meta_path(path):
    return f"{path}.meta.json"


def write_meta(path, command, config_hash, seed, extra=None):
    meta = {"command": command, "config_hash": config_hash, "master_seed": int(seed), "version": __version__}
    if extra:
        meta.update(extra)
    write_json(meta_path(path), meta)

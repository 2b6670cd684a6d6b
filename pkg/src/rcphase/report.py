"""CSV tables, metadata sidecars, run manifests and gnuplot scripts."""

from __future__ import annotations

import csv
import json
import math
import os
import subprocess
import tempfile
from pathlib import Path


def format_value(v) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    if isinstance(v, (bool,)):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


def tool_version() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=here, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    from . import __version__
    return __version__


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    lines = []

    class _Sink:
        def write(self, s):
            lines.append(s)

    writer = csv.writer(_Sink(), lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    _atomic_write(path, "".join(lines))
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return format_value(obj)
    if hasattr(obj, "item"):
        return _jsonable(obj.item())
    return obj


def write_table(path, table, extra_meta=None) -> Path:
    """Write a :class:`~rcphase.phase.CurveTable` (or anything with ``header``,
    ``rows`` and ``metadata``) plus its ``.meta.json`` sidecar."""
    path = write_csv(path, table.header(), table.rows())
    meta = {"csv": path.name, "columns": table.header(), **table.metadata,
            **(extra_meta or {}), "version": tool_version()}
    _atomic_write(path.with_suffix(".meta.json"),
                  json.dumps(_jsonable(meta), indent=2) + "\n")
    return path


def write_manifest(out_dir, manifest: dict) -> Path:
    path = Path(out_dir) / "manifest.json"
    _atomic_write(path, json.dumps(_jsonable(manifest), indent=2) + "\n")
    return path


def boundaries_script(csv_name: str, mi: float) -> str:
    return f"""# gnuplot script: phase boundaries in the (beta, R) plane
set datafile separator ","
set key autotitle columnhead top right
set xlabel "beta"
set ylabel "R [nats]"
set terminal pngcairo size 900,650
set output "boundaries.png"
plot "{csv_name}" using 1:2 with lines lw 2 lc rgb "red" title "I^b(beta)", \\
     "{csv_name}" using 1:3 with lines lw 2 lc rgb "blue" title "R*(beta)", \\
     "{csv_name}" using 1:4 with lines lw 2 lc rgb "dark-green" title "I^s(beta)", \\
     "< echo '1,{format_value(mi)}'" using 1:2 with points pt 7 ps 1.5 lc rgb "black" title "(1, I(X;Y))"
"""


def branches_script(csv_name: str, rate: float) -> str:
    return f"""# gnuplot script: free-energy branches versus beta at R = {format_value(rate)}
set datafile separator ","
set key autotitle columnhead top right
set xlabel "beta"
set ylabel "free energy [nats]"
set terminal pngcairo size 900,650
set output "branches.png"
plot "{csv_name}" using 1:2 with lines lw 2 lc rgb "red" title "psi_b", \\
     "{csv_name}" using 1:3 with lines lw 2 lc rgb "dark-green" title "psi_s", \\
     "{csv_name}" using 1:5 with lines lw 2 dt 2 lc rgb "black" title "psi_iid"
"""


def write_script(path, text) -> Path:
    path = Path(path)
    _atomic_write(path, text)
    return path

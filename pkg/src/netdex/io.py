"""Block files, design JSON and CSV/JSON output helpers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from netdex.graph import Network
from netdex.models import BlockPartition, Design, DesignMatrixError

SIGNIFICANT_DIGITS = 12


class FormatError(ValueError):
    pass


def read_blocks(path: str | Path, net: Network) -> BlockPartition:
    """Parse ``vertex_id block_label`` lines; every vertex must appear exactly once."""
    path = Path(path)
    labels = np.zeros(net.n, dtype=np.int64)
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'vertex_id block_label', got {line!r}")
            try:
                vid, label = int(parts[0]), int(parts[1])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-integer field in {line!r}") from None
            try:
                j = net.index_of(vid)
            except KeyError:
                raise FormatError(f"{path}:{lineno}: vertex {vid} is not in the graph") from None
            if labels[j]:
                raise FormatError(f"{path}:{lineno}: vertex {vid} listed twice")
            if label < 1:
                raise FormatError(f"{path}:{lineno}: block labels start at 1")
            labels[j] = label
    missing = [net.vertex_ids[j] for j in np.flatnonzero(labels == 0)]
    if missing:
        raise FormatError(f"{path}: no block label for vertices {missing[:10]}")
    try:
        return BlockPartition(labels)
    except DesignMatrixError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_blocks(path: str | Path, net: Network, blocks: BlockPartition) -> None:
    with Path(path).open("w") as fh:
        fh.write(f"# vertex_id block_label (kappa={blocks.kappa})\n")
        for j, g in enumerate(blocks.labels):
            fh.write(f"{net.vertex_ids[j]} {int(g)}\n")


def clean(obj: Any) -> Any:
    """JSON-safe copy with floats at 12 significant digits and non-finite floats as null."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.{SIGNIFICANT_DIGITS}g}") if math.isfinite(x) else None
    return obj


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(clean(payload), indent=2) + "\n")


def read_design(path: str | Path) -> tuple[Design, dict]:
    payload = json.loads(Path(path).read_text())
    try:
        m = int(payload["m"])
        assignment = payload["assignment"]
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{path}: design JSON needs 'm' and 'assignment'") from None
    return Design(np.asarray(assignment, dtype=np.int64), m), payload


def write_design(path: str | Path, design: Design, **meta) -> None:
    payload = {"m": design.m, "assignment": design.assignment.tolist()}
    payload.update(meta)
    write_json(path, payload)


def fmt(x: Any) -> str:
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "" if math.isnan(x) else f"{x:.{SIGNIFICANT_DIGITS}g}"
    return str(x)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")

"""Artifact writers and run manifests.

Numbers are written with ``repr`` so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .domain import Field


def _plain(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_plain(float(obj.real)), _plain(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(obj: Any, path: Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return path


def _cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path: Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def read_field_csv(domain, path: Path) -> Field:
    """Inverse of :func:`write_field_csv`; node order must match ``domain``."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if len(rows) != domain.n or not np.allclose(rows[:, :2], domain.points):
        raise ValueError("field file does not match the domain nodes")
    return Field(domain, rows[:, 2].copy())


def write_field_csv(u: Field, path: Path) -> Path:
    pts = u.domain.points
    return write_csv(path, ["x", "y", "value"], zip(pts[:, 0], pts[:, 1], u.values))


def write_field_binary(u: Field, path: Path) -> tuple[Path, Path]:
    """Row-major float64 grid (zero outside Omega) plus a JSON header."""
    path = Path(path)
    g = np.ascontiguousarray(u.grid(), dtype="<f8")
    path.write_bytes(g.tobytes(order="C"))
    dom = u.domain
    head = {
        "dtype": "float64",
        "byte_order": "little",
        "order": "row-major",
        "shape": list(g.shape),
        "h": dom.h,
        "bbox": list(dom.bbox),
        "domain": dom.spec(),
    }
    return path, write_json(head, path.with_suffix(".json"))


def read_field_binary(path: Path) -> np.ndarray:
    path = Path(path)
    head = json.loads(path.with_suffix(".json").read_text())
    return np.frombuffer(path.read_bytes(), dtype="<f8").reshape(head["shape"])


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    backend: str
    started: str = ""
    finished: str = ""
    artifacts: list[dict] = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(bool(c["passed"]) for c in self.checks.values())

    def check(self, name: str, passed: bool, **values: Any) -> None:
        self.checks[name] = {"passed": bool(passed), **values}

    def add(self, out_dir: Path, *paths: Path) -> None:
        for p in paths:
            p = Path(p)
            self.artifacts.append({"path": p.relative_to(out_dir).as_posix(), "sha256": sha256(p), "bytes": p.stat().st_size})

    def verify(self, out_dir: Path) -> list[str]:
        """Artifacts that are missing or whose checksum changed."""
        bad = []
        for a in self.artifacts:
            p = Path(out_dir) / a["path"]
            if not p.exists() or sha256(p) != a["sha256"]:
                bad.append(a["path"])
        return bad

    def write(self, out_dir: Path) -> Path:
        d = asdict(self)
        d["passed"] = self.passed
        return write_json(d, Path(out_dir) / "manifest.json")


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")

"""Reproducible run persistence: full-precision CSV, JSON manifests and configs."""
from __future__ import annotations

import datetime as _dt
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

OUTPUT_ENV = "CUSPUNI_OUTPUT"
DEFAULT_OUTPUT = "runs"


def tool_version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:  # not installed as a distribution
        return "0.1.0"


def output_root(explicit: str | os.PathLike | None = None) -> Path:
    return Path(explicit or os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))


def format_value(v) -> str:
    """17 significant digits for floats, so values round-trip exactly."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: str | os.PathLike, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")
    return path


def read_csv(path: str | os.PathLike) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def load_config(path: str | os.PathLike | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if hasattr(v, "value") and isinstance(getattr(v, "value"), str):
        return v.value
    return v


@dataclass
class RunManifest:
    command: str
    config_snapshot: dict
    seed: int | None = None
    started: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())
    finished: str | None = None
    artifact_paths: list = field(default_factory=list)
    tool_version: str = field(default_factory=tool_version)

    def add(self, path: str | os.PathLike, root: str | os.PathLike) -> None:
        self.artifact_paths.append(str(Path(path).relative_to(root)))

    def write(self, directory: str | os.PathLike) -> Path:
        self.finished = _dt.datetime.now(_dt.timezone.utc).isoformat()
        path = Path(directory) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        body = _jsonable(self.__dict__)
        with open(path, "w") as fh:
            json.dump(body, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def write_trajectory(directory, traj, every: int = 1, name: str = "trajectory.csv") -> Path:
    """Snapshots as long-format rows ``t, process, i, position``."""
    rows = []
    for k in range(0, traj.times.size, every):
        for p in range(traj.states.shape[1]):
            for lab, x in zip(traj.labels, traj.states[k, p]):
                rows.append((traj.times[k], p, lab, x))
    return write_csv(Path(directory) / name, ["t", "process", "i", "position"], rows)


def write_mc_run(directory, records, stats=None, report=None, model=None) -> list[Path]:
    """Per-seed eigenvalue files and the binned statistics table."""
    directory = Path(directory)
    paths = []
    for r in records:
        paths.append(write_csv(directory / "eigenvalues" / f"{r.seed:03d}.csv", ["eigenvalue"],
                               [(x,) for x in r.eigenvalues]))
    if stats is not None:
        z = report.z if report is not None else np.full(stats.counts.size, np.nan)
        mod = model if model is not None else (report.model if report is not None and report.model is not None
                                               else np.full(stats.counts.size, np.nan))
        rows = zip(stats.centers, stats.counts, stats.density, stats.stderr, mod, z)
        paths.append(write_csv(directory / "stats.csv",
                               ["bin_center", "count", "density", "stderr", "model_density", "z"], rows))
    return paths

"""Result files: schema header, tab-delimited tables, JSON records, run manifests.

Every file starts with ``# hybridqkd-schema: <n>``. Floats are written with
``repr`` so reruns with the same seed reproduce files byte for byte. Only
the manifest carries wall-clock timestamps.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import __version__

SCHEMA_VERSION = 1
HEADER = f"# hybridqkd-schema: {SCHEMA_VERSION}"
OUT_ENV = "HYBRIDQKD_OUT"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "results"))


def _cell(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _plain(obj: Any) -> Any:
    """JSON-safe copy: enums to values, non-finite floats to strings, tuples to lists."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "value") and hasattr(obj, "name") and not isinstance(obj, (int, float)):
        return obj.value
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def write_table(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    lines = [HEADER, "\t".join(columns)]
    lines += ["\t".join(_cell(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    return lines[0].split("\t"), [ln.split("\t") for ln in lines[1:]]


def write_json(path: Path, obj: Any) -> Path:
    body = json.dumps(_plain(obj), indent=2, sort_keys=True)
    path.write_text(HEADER + "\n" + body + "\n", encoding="utf-8")
    return path


def read_json(path: Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    body = "\n".join(ln for ln in text.splitlines() if not ln.startswith("#"))
    return json.loads(body)


def write_text(path: Path, text: str) -> Path:
    path.write_text(HEADER + "\n" + text, encoding="utf-8")
    return path


@dataclass
class RunManifest:
    """Everything needed to re-execute a run."""

    command: str
    scenario: str | None
    seed: int | None
    argv: list[str]
    parameters: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    version: str = __version__
    started: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished: str | None = None

    def add(self, path: Path) -> Path:
        self.outputs.append(path.name)
        return path

    def write(self, out_dir: Path, stem: str) -> Path:
        self.finished = datetime.now(timezone.utc).isoformat()
        rec = {
            "command": self.command,
            "scenario": self.scenario,
            "seed": self.seed,
            "argv": self.argv,
            "parameters": self.parameters,
            "outputs": sorted(self.outputs),
            "version": self.version,
            "timestamps": {"started": self.started, "finished": self.finished},
        }
        return write_json(out_dir / f"{stem}-manifest.json", rec)

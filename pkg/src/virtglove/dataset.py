"""Dataset manifest: one JSON document listing every recorded frame."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

MANIFEST_VERSION = 1


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRecord:
    frame_id: int
    color_path: str
    depth_path: str
    keypoints_path: str
    label: int
    split: str = "train"
    clip: int | None = None


@dataclass
class Manifest:
    records: list[ManifestRecord]
    root: Path = Path(".")
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def split(self, name: str | None) -> list[ManifestRecord]:
        if name is None or name == "all":
            return list(self.records)
        return [r for r in self.records if r.split == name]

    def to_json(self) -> str:
        doc = {
            "version": MANIFEST_VERSION,
            "seed": self.seed,
            "params": self.params,
            "records": [asdict(r) for r in self.records],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def load_manifest(path) -> Manifest:
    path = Path(os.fspath(path))
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("records"), list):
        raise ManifestError(f"{path}: missing 'records' list")
    records = []
    for i, raw in enumerate(doc["records"]):
        try:
            records.append(
                ManifestRecord(
                    frame_id=int(raw["frame_id"]),
                    color_path=str(raw["color_path"]),
                    depth_path=str(raw["depth_path"]),
                    keypoints_path=str(raw["keypoints_path"]),
                    label=int(raw["label"]),
                    split=str(raw.get("split", "train")),
                    clip=None if raw.get("clip") is None else int(raw["clip"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}: record {i} is malformed ({exc!r})") from exc
    return Manifest(records, path.parent, doc.get("params") or {}, doc.get("seed"))

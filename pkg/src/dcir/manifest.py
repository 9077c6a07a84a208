"""Dataset and run manifests tying pipeline artifacts together.

A dataset manifest names every file a command needs (models, scene
maps, captures with their patterns, train/test split) with paths stored
relative to the manifest location.  Serialization is canonical (sorted
keys, fixed indent) so load -> save -> load is a fixed point and
identical runs write identical bytes.

Every CLI run additionally writes a run manifest recording the command,
arguments, seed, and package versions.  It is created with status
"running" and flipped to "ok" only after the command finishes, so a
crashed run is visible from its artifacts.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import DataError

MANIFEST_VERSION = "1"
MANIFEST_NAME = "manifest.json"


@dataclass
class Manifest:
    """Paths of one dataset; see module docstring for semantics."""

    version: str = MANIFEST_VERSION
    display: str = ""
    camera: str = ""
    scene: dict = field(default_factory=dict)  # depth/normal/mask [+ bases/weights]
    captures: list = field(default_factory=list)  # {image, pattern, polarized}
    split: dict = field(default_factory=lambda: {"train": [], "test": []})
    olat: str | None = None
    base_dir: str = "."

    def resolve(self, path: str) -> str:
        return os.path.normpath(os.path.join(self.base_dir, path))

    def to_dict(self) -> dict:
        doc = {
            "version": self.version,
            "display": self.display,
            "camera": self.camera,
            "scene": self.scene,
            "captures": self.captures,
            "split": self.split,
        }
        if self.olat is not None:
            doc["olat"] = self.olat
        return doc

    def validate(self) -> None:
        n = len(self.captures)
        train = self.split.get("train", [])
        test = self.split.get("test", [])
        if set(train) & set(test):
            raise DataError("train and test splits overlap")
        for idx in list(train) + list(test):
            if not 0 <= idx < n:
                raise DataError(f"split index {idx} out of range for {n} captures")
        for rel in self._referenced_paths():
            if not os.path.exists(self.resolve(rel)):
                raise DataError(f"manifest references missing file {rel}")

    def _referenced_paths(self):
        for rel in (self.display, self.camera):
            if rel:
                yield rel
        for rel in self.scene.values():
            if isinstance(rel, str):
                yield rel
            else:
                yield from rel
        for cap in self.captures:
            yield cap["image"]
            if cap.get("pattern"):
                yield cap["pattern"]


def save_manifest(path, manifest: Manifest) -> None:
    with open(path, "w") as fp:
        json.dump(manifest.to_dict(), fp, indent=1, sort_keys=True)
        fp.write("\n")


def load_manifest(path, validate: bool = True) -> Manifest:
    try:
        with open(path) as fp:
            doc = json.load(fp)
    except FileNotFoundError as exc:
        raise DataError(f"missing manifest {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest {path}: {exc}") from exc
    m = Manifest(
        version=str(doc.get("version", MANIFEST_VERSION)),
        display=doc.get("display", ""),
        camera=doc.get("camera", ""),
        scene=doc.get("scene", {}),
        captures=doc.get("captures", []),
        split=doc.get("split", {"train": [], "test": []}),
        olat=doc.get("olat"),
        base_dir=os.path.dirname(os.path.abspath(path)) or ".",
    )
    if validate:
        m.validate()
    return m


def write_run_manifest(out_dir, command: str, args: dict,
                       status: str = "running") -> str:
    """Record a CLI invocation; call again with status="ok" to finalize."""
    import numpy

    from . import __version__

    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "run_manifest.json")
    doc = {
        "command": command,
        "args": {k: args[k] for k in sorted(args)},
        "status": status,
        "versions": {"dcir": __version__, "numpy": numpy.__version__},
    }
    with open(path, "w") as fp:
        json.dump(doc, fp, indent=1, sort_keys=True)
        fp.write("\n")
    return path

"""Artifact persistence and run manifests.

Every artifact is a versioned payload saved with torch's native serializer
and tracked in a per-run ``manifest.json`` carrying content hashes.  Run
directories are self-contained: ``runs/<run_id>/{manifest.json, models/,
samples/, reports/, plots/}``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .architectures import make_model
from .errors import ArtifactCorruptionError, ValidationError
from .frozen import FrozenModel

ARTIFACT_FORMAT = "eil-artifact"
ARTIFACT_VERSION = 1

RUN_SUBDIRS = ("models", "samples", "reports", "plots")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stable_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False)


def round_floats(obj, ndigits: int = 6):
    """Recursively round floats so metric files diff cleanly."""
    if isinstance(obj, float):
        return round(obj, ndigits)
    if isinstance(obj, dict):
        return {k: round_floats(v, ndigits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, ndigits) for v in obj]
    return obj


def save_artifact(kind: str, payload: dict, path) -> str:
    """Write a versioned artifact; returns its content hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {"format": ARTIFACT_FORMAT, "version": ARTIFACT_VERSION, "kind": kind}
    record.update(payload)
    torch.save(record, path)
    return sha256_file(path)


def load_artifact(path, expected_kind: str | None = None) -> dict:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"artifact not found: {path}")
    record = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(record, dict) or record.get("format") != ARTIFACT_FORMAT:
        raise ValidationError(f"{path} is not an artifact file")
    if record.get("version") != ARTIFACT_VERSION:
        raise ValidationError(
            f"{path}: unsupported artifact version {record.get('version')}"
        )
    if expected_kind is not None and record.get("kind") != expected_kind:
        raise ValidationError(
            f"{path}: expected kind {expected_kind!r}, found {record.get('kind')!r}"
        )
    return record


def save_frozen_model(model: FrozenModel, path) -> str:
    return save_artifact(
        "frozen_model",
        {
            "model_id": model.model_id,
            "arch_id": model.arch_id,
            "num_classes": model.num_classes,
            "provenance": dict(model.provenance),
            "state_dict": model.module.state_dict(),
            "weight_sha256": model.weight_sha256,
        },
        path,
    )


def load_frozen_model(path) -> FrozenModel:
    record = load_artifact(path, expected_kind="frozen_model")
    module = make_model(record["arch_id"], record["num_classes"])
    module.load_state_dict(record["state_dict"])
    # FrozenModel recomputes the weight hash and raises on mismatch.
    return FrozenModel(
        model_id=record["model_id"],
        arch_id=record["arch_id"],
        num_classes=record["num_classes"],
        module=module,
        provenance=record["provenance"],
        weight_sha256=record["weight_sha256"],
    )


@dataclass
class RunManifest:
    """Index of one run directory: config snapshot, artifact hashes, metrics."""

    run_id: str
    config: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)  # [{path, sha256, kind}]
    metrics: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=dict)

    def add_artifact(self, base_dir, rel_path: str, kind: str) -> dict:
        entry = {
            "path": str(rel_path),
            "sha256": sha256_file(Path(base_dir) / rel_path),
            "kind": kind,
        }
        # Re-registering a path replaces its entry, keeping the list stable.
        self.artifacts = [a for a in self.artifacts if a["path"] != entry["path"]]
        self.artifacts.append(entry)
        self.artifacts.sort(key=lambda a: a["path"])
        return entry

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config": self.config,
            "artifacts": self.artifacts,
            "metrics": round_floats(self.metrics),
            "timestamps": self.timestamps,
        }

    def save(self, run_dir) -> Path:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        self.timestamps.setdefault("created", time.strftime("%Y-%m-%dT%H:%M:%S"))
        self.timestamps["updated"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        path = run_dir / "manifest.json"
        path.write_text(stable_json(self.to_dict()) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, run_dir) -> "RunManifest":
        path = Path(run_dir) / "manifest.json"
        if not path.exists():
            raise ValidationError(f"no manifest.json under {run_dir}")
        d = json.loads(path.read_text(encoding="utf-8"))
        missing = {"run_id", "config", "artifacts", "metrics"} - set(d)
        if missing:
            raise ValidationError(f"{path} missing keys: {sorted(missing)}")
        return cls(
            run_id=d["run_id"],
            config=d["config"],
            artifacts=d["artifacts"],
            metrics=d["metrics"],
            timestamps=d.get("timestamps", {}),
        )

    def verify(self, run_dir) -> None:
        """Recompute every artifact hash; corruption raises with both hashes."""
        for entry in self.artifacts:
            path = Path(run_dir) / entry["path"]
            if not path.exists():
                raise ArtifactCorruptionError(str(path), entry["sha256"], "<missing>")
            actual = sha256_file(path)
            if actual != entry["sha256"]:
                raise ArtifactCorruptionError(str(path), entry["sha256"], actual)


def make_run_dir(out_dir, run_id: str) -> Path:
    run_dir = Path(out_dir) / run_id
    for sub in RUN_SUBDIRS:
        (run_dir / sub).mkdir(parents=True, exist_ok=True)
    return run_dir

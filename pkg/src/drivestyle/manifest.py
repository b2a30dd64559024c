"""Run manifests: a provenance record written next to every artifact.

Each manifest stores digests of the inputs it was computed from plus a
pointer to each input's own manifest, so any artifact can be traced
back to raw input digests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from . import __version__
from .errors import DependencyError


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()


def manifest_path(artifact: str | Path) -> Path:
    artifact = Path(artifact)
    return artifact.with_name(artifact.name + ".manifest.json")


@dataclass
class RunManifest:
    run_id: str
    stage: str
    tool_version: str
    created_at: str
    seed: Optional[int]
    config: dict
    config_digest: str
    inputs: list[dict] = field(default_factory=list)
    outputs: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "stage": self.stage,
            "tool_version": self.tool_version,
            "created_at": self.created_at,
            "seed": self.seed,
            "config": self.config,
            "config_digest": self.config_digest,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }


def write_manifest(
    stage: str,
    inputs: list[str | Path],
    outputs: list[str | Path],
    config: dict,
    seed: Optional[int] = None,
) -> RunManifest:
    """Digest inputs and outputs, then write one manifest per output."""
    input_records = []
    for p in inputs:
        p = Path(p)
        if not p.exists():
            raise DependencyError(
                f"stage '{stage}' requires upstream artifact {p}, which does not exist")
        mpath = manifest_path(p)
        input_records.append({
            "path": str(p),
            "sha256": sha256_file(p),
            "manifest": str(mpath) if mpath.exists() else None,
        })
    output_records = [{"path": str(p), "sha256": sha256_file(p)} for p in outputs]
    digest = config_hash(config)
    run_id = hashlib.sha256(
        (digest + "".join(r["sha256"] for r in input_records + output_records)).encode()
    ).hexdigest()[:16]
    manifest = RunManifest(
        run_id=run_id,
        stage=stage,
        tool_version=__version__,
        created_at=datetime.now(timezone.utc).isoformat(),
        seed=seed,
        config=config,
        config_digest=digest,
        inputs=input_records,
        outputs=output_records,
    )
    for p in outputs:
        manifest_path(p).write_text(
            json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return manifest


def read_manifest(artifact: str | Path) -> dict:
    mpath = manifest_path(artifact)
    if not mpath.exists():
        raise DependencyError(f"no manifest found for artifact {artifact}")
    with open(mpath, "r", encoding="utf-8") as fh:
        return json.load(fh)


def resolve_chain(artifact: str | Path) -> list[dict]:
    """All manifests reachable from an artifact, ending at raw inputs."""
    chain = []
    seen = set()
    stack = [str(manifest_path(artifact))]
    while stack:
        mfile = stack.pop()
        if mfile in seen or not Path(mfile).exists():
            continue
        seen.add(mfile)
        with open(mfile, "r", encoding="utf-8") as fh:
            record = json.load(fh)
        chain.append(record)
        for inp in record["inputs"]:
            if inp.get("manifest"):
                stack.append(inp["manifest"])
    return chain

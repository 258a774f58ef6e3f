"""Digest and structural counts of the shipped registry."""

import hashlib
import json
import pathlib

HERE = pathlib.Path(__file__).resolve().parent
REGISTRY = HERE.parent.parent / "assets" / "registry.json"
GOLDENS = HERE.parent / "goldens"


def main():
    doc = json.loads(REGISTRY.read_text())
    data = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    out = {
        "digest": hashlib.sha256(data).hexdigest(),
        "phases": len(doc["phases"]),
        "domains": len(doc["domains"]),
        "checks": len(doc["checks"]),
        "tasks": len(doc["tasks"]),
    }
    (GOLDENS / "registry.json").write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()

"""Brute-force reference for consolidation, classification, the risk matrix
and the score. Reads findings, writes the expected outputs as JSON.

Usage: risk_oracle.py            regenerate every golden
"""

import hashlib
import json
import pathlib
import random

HERE = pathlib.Path(__file__).resolve().parent
REGISTRY = HERE.parent.parent / "assets" / "registry.json"
GOLDENS = HERE.parent / "goldens"

LEVELS = ["INFO", "LOW", "MEDIUM", "HIGH", "CRITICAL"]
IMPACTS = ["none", "partial", "full"]
DIMS = ["confidentiality", "integrity", "availability"]
QUICK_FIX_THRESHOLD = 3


def norm(path):
    parts = [p for p in path.replace("\\", "/").split("/") if p not in ("", ".")]
    return "/".join(parts)


def vuln_id(check_id, path):
    return "V-" + hashlib.sha256(f"{check_id}|{path}".encode()).hexdigest()[:12]


def consolidate(findings, checks):
    groups = {}
    for rf in findings:
        f = rf["finding"]
        ev = f.get("evidence", [])
        primary = norm(ev[0]["path"]) if ev else ""
        groups.setdefault((f["check_id"], primary), []).append(rf)
    out = []
    for key in sorted(groups):
        members = groups[key]
        check_id, primary = key
        level = max((m["finding"]["severity"]["level"] for m in members), key=LEVELS.index)
        cia = {
            d: max((m["finding"]["severity"]["cia_impact"][d] for m in members), key=IMPACTS.index)
            for d in DIMS
        }
        seen = {}
        for m in members:
            for e in m["finding"].get("evidence", []):
                k = (norm(e["path"]), e.get("line"))
                if k not in seen:
                    seen[k] = e.get("excerpt", "")
        locations = []
        for (path, line) in sorted(seen, key=lambda k: (k[0], -1 if k[1] is None else k[1])):
            loc = {"path": path, "excerpt": seen[(path, line)]}
            if line is not None:
                loc["line"] = line
            locations.append(loc)
        remediation = ""
        for m in members:
            r = m["finding"].get("remediation", "").strip()
            if r:
                remediation = r
                break
        if not remediation:
            remediation = checks[check_id]["remediation"]
        seqs = sorted({m["event_sequence"] for m in members})
        out.append(
            {
                "vuln_id": vuln_id(check_id, primary),
                "check_ids": [check_id],
                "domain_id": checks[check_id]["domain_id"],
                "title": checks[check_id]["title"],
                "severity": {"level": level, "cia_impact": cia},
                "locations": locations,
                "remediation": remediation,
                "first_event_sequence": seqs[0],
                "event_sequences": seqs,
            }
        )
    return out


def classify(record, checks):
    cia = record["severity"]["cia_impact"]
    idx = LEVELS.index(checks[record["check_ids"][0]]["default_severity"])
    if cia["confidentiality"] == "full" or cia["integrity"] == "full":
        idx = min(idx + 1, len(LEVELS) - 1)
    if idx == 0 and any(cia[d] != "none" for d in DIMS):
        idx = 1
    return dict(record, severity={"level": LEVELS[idx], "cia_impact": cia})


def matrix(classified):
    rows = []
    for r in classified:
        rank = LEVELS.index(r["severity"]["level"])
        impact = sum(1 for d in DIMS if r["severity"]["cia_impact"][d] != "none")
        quick = 1 if r["remediation"].strip() and len(r["locations"]) <= QUICK_FIX_THRESHOLD else 0
        rows.append(
            {
                "vuln_id": r["vuln_id"],
                "check_id": r["check_ids"][0],
                "domain_id": r["domain_id"],
                "severity": r["severity"]["level"],
                "impact_rank": impact,
                "remediation_rank": quick,
                "composite_rank": rank * 100 + impact * 10 + quick,
            }
        )
    # Two stable passes: secondary key first, then the primary key descending.
    rows.sort(key=lambda row: row["vuln_id"])
    rows.sort(
        key=lambda row: (LEVELS.index(row["severity"]), row["impact_rank"], row["remediation_rank"]),
        reverse=True,
    )
    return {"quick_fix_threshold": QUICK_FIX_THRESHOLD, "rows": rows}


def score(classified, weights):
    deductions = []
    total = 0
    for level in reversed(LEVELS):
        count = sum(1 for r in classified if r["severity"]["level"] == level)
        subtotal = count * weights[level]
        total += subtotal
        deductions.append({"level": level, "count": count, "weight": weights[level], "subtotal": subtotal})
    return {"value": max(0, min(100, 100 - total)), "total_deduction": total, "deductions": deductions}


def evaluate(findings, registry):
    checks = {c["check_id"]: c for c in registry["checks"]}
    inventory = consolidate(findings, checks)
    classified = [classify(r, checks) for r in inventory]
    return {
        "inventory": inventory,
        "classified": classified,
        "matrix": matrix(classified),
        "score": score(classified, registry["score_weights"]),
    }


def synthetic_findings(registry, seed=20260101, n=120):
    """Findings with repeated keys, path spellings that normalize together,
    duplicate locations and empty remediations."""
    rng = random.Random(seed)
    checks = registry["checks"]
    pool = [c for c in checks if c["default_severity"] != "INFO"][:12] + [
        c for c in checks if c["default_severity"] == "INFO"
    ][:2]
    paths = ["app/a.py", "./app/a.py", "app//a.py", "lib/b.js", "lib\\b.js", "conf/c.yaml", "d.toml"]
    out = []
    for seq in range(1, n + 1):
        check = rng.choice(pool)
        level = rng.choice(LEVELS)
        cia = {d: rng.choice(IMPACTS) for d in DIMS}
        if level == "INFO":
            cia = {d: "none" for d in DIMS}
        evidence = []
        for _ in range(rng.randint(1, 3)):
            e = {"path": rng.choice(paths), "excerpt": f"x{rng.randint(0, 9)}"}
            if rng.random() < 0.8:
                e["line"] = rng.randint(1, 6)
            evidence.append(e)
        out.append(
            {
                "event_sequence": seq * 2,
                "task_id": "T4",
                "finding": {
                    "check_id": check["check_id"],
                    "status": "fail",
                    "severity": {"level": level, "cia_impact": cia},
                    "evidence": evidence,
                    "explanation": "synthetic",
                    "remediation": rng.choice(["", "  ", "patch it", "rotate"]),
                },
            }
        )
    return out


def dump(path, value):
    path.write_text(json.dumps(value, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def main():
    registry = json.loads(REGISTRY.read_text())
    fixture = json.loads((GOLDENS / "fixture_findings.json").read_text())
    dump(GOLDENS / "risk_fixture.json", evaluate(fixture, registry))
    synthetic = synthetic_findings(registry)
    dump(GOLDENS / "synthetic_findings.json", synthetic)
    dump(GOLDENS / "risk_synthetic.json", evaluate(synthetic, registry))


if __name__ == "__main__":
    main()

"""Smoke test for the namesquat_py extension module."""

import json
import sys
import tempfile

import namesquat_py as ns


def main():
    assert ns.normalize("VitaLik", "eth") == "vitalik.eth"
    n = ns.Name("johndoe.eth")
    assert (n.label, n.namespace, n.display) == ("johndoe", "eth", "johndoe.eth")

    variants = {v["label"]: v["model"] for v in ns.generate("johndoe.eth")}
    for label in ["jjohndoe", "johndoew", "johndo", "johnode", "nohndoe", "john-doe", "johndoes"]:
        assert label in variants, label
    assert ns.classify("johnode", "johndoe.eth") == ["swapping"]
    assert ns.distance("johndoe", "johnode") == 1

    guard = ns.TypoGuard(blocklist=["scamname.eth"])
    guard.record_send("vitalik.eth", "2023-01-01T00:00:00Z")
    assert guard.check("vitalik.eth")["decision"] == "ALLOW"
    warn = guard.check("vitalikk.eth")
    assert warn["decision"] == "WARN" and warn["matched_target"] == "vitalik.eth", warn
    assert guard.check("scamname.eth")["decision"] == "WARN"

    with tempfile.TemporaryDirectory() as d:
        scenario = json.dumps({"n_legit": 60, "n_filler": 120, "n_decoys": 20})
        manifest = ns.simulate(d, seed=5, scenario_json=scenario)
        clusters = ns.detect(d, top_n=manifest["top_n"])
        found = {(c["target"], s["display"]) for c in clusters for s in c["squats"]}
        planted = {(c["target"], s["display"]) for c in manifest["clusters"] for s in c["squats"]}
        assert found == planted, (len(found), len(planted))

    print("smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Smoke test for the permadid Python extension.

Build first with `cargo build -p permadid-py --release`, then run
`python3 python/smoke_test.py`. The script loads the built library from
target/ (or from $PERMADID_LIB) without needing an install step.
"""

import importlib.util
import json
import os
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    candidates = [os.environ.get("PERMADID_LIB")] + [
        str(ROOT / "target" / profile / "libpermadid.so") for profile in ("release", "debug")
    ]
    for path in filter(None, candidates):
        if os.path.exists(path):
            tmp = pathlib.Path(tempfile.mkdtemp()) / "permadid.so"
            shutil.copy(path, tmp)
            spec = importlib.util.spec_from_file_location("permadid", tmp)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            return module
    sys.exit("permadid library not found; run `cargo build -p permadid-py` first")


def check_bbs(pd):
    sk, pk = pd.bbs_keygen(bytes(range(32)))
    assert len(pk) == 96
    messages = [b"name=Alice", b"age=25", b"city=Lisbon"]
    sig = pd.bbs_sign(sk, pk, b"header", messages)
    assert len(sig) == 80
    assert pd.bbs_verify(pk, b"header", messages, sig)
    assert not pd.bbs_verify(pk, b"header", [b"name=Mallory"] + messages[1:], sig)

    proof = pd.bbs_proof_gen(pk, sig, b"header", b"nonce", messages, [1])
    assert len(proof) == 144 + 32 * (4 + 2)
    assert pd.bbs_proof_verify(pk, proof, b"header", b"nonce", [(1, b"age=25")])
    assert not pd.bbs_proof_verify(pk, proof, b"header", b"other", [(1, b"age=25")])
    assert not pd.bbs_proof_verify(pk, proof, b"header", b"nonce", [(1, b"age=26")])


def check_flow(pd):
    net = pd.Network(7)
    net.set_date("2024-06-01")
    gov = net.setup("issuer", "gov", "gov")
    alice = net.setup("holder", "alice", "alice")
    net.setup("verifier", "shop")
    assert net.resolve("alice")["id"] == alice

    preds = json.dumps([{"path": "age", "op": ">=", "value": 18}])
    cred = net.issue("gov", "alice", json.dumps({"name": "Alice", "age": 25}), "open", preds)

    result = net.verify("shop", "alice", ["ageOver18"])
    assert result["outcome"] == "ACCEPT", result
    assert [p for p, _ in result["disclosed"]] == ["ageOver18"]

    report = net.refresh("alice", ["gov"])
    assert report["newDid"] != alice and net.did("alice") == report["newDid"]
    assert net.verify("shop", "alice", ["age"])["outcome"] == "ACCEPT"

    net.revoke("gov", cred)
    assert gov == net.did("gov")
    stats = net.weave_stats()
    assert stats["height"] > 0 and stats["pending"] == 0


def check_weave_and_scenario(pd):
    weave = pd.Weave()
    assert weave.verify() and weave.height() == 0
    copy = pd.Weave.from_snapshot(weave.snapshot())
    assert copy.snapshot_digest() == weave.snapshot_digest()

    fixture = (ROOT / "fixtures" / "alice_age.json").read_text()
    report = pd.run_scenario(fixture)
    assert report["passed"], report


def main():
    pd = load()
    check_bbs(pd)
    check_flow(pd)
    check_weave_and_scenario(pd)
    print("smoke test passed")


if __name__ == "__main__":
    main()

"""Smoke test for the roadchain_py extension.

Uses an installed module when available (``maturin develop`` in crates/py),
otherwise the library from ``cargo build -p roadchain-py --release``.
"""

import importlib
import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    try:
        return importlib.import_module("roadchain_py")
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libroadchain_py.so"
        if lib.exists():
            tmp = Path(tempfile.mkdtemp())
            shutil.copy(lib, tmp / "roadchain_py.so")
            sys.path.insert(0, str(tmp))
            return importlib.import_module("roadchain_py")
    sys.exit("roadchain_py not found: run `cargo build -p roadchain-py --release` first")


def main():
    rc = load_module()

    # closed form against a direct binomial sum
    p, f = 0.3, 2
    n = 3 * f + 1
    tail = sum(math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(f + 1, n + 1))
    assert abs(rc.attack_success_probability(p, f) - p * tail) < 1e-12

    freq, se = rc.monte_carlo_attack_probability(0.5, 2, trials=20_000, seed=3)
    assert abs(freq - rc.attack_success_probability(0.5, 2)) < 5 * se

    assert abs(rc.travel_bound("ds", 60.0) - (130 / 3.6 * 60 + 15)) < 1e-9
    assert rc.travel_bound("dd", 0.0) == 30.0

    try:
        rc.attack_success_probability(1.5, 2)
    except ValueError:
        pass
    else:
        raise AssertionError("p outside [0, 1] accepted")

    sc = rc.Scenario('duration_s = 600\n[attack]\nkind = "random_spam"\nfraction = 0.1\n')
    sc.seed = 4
    sc.set("attack.start_s", 0)
    try:
        sc.set("no_such_key", 1)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")

    run = sc.run()
    run.audit()
    assert len(run) == 10 and run.height == 10
    assert run.halt is None
    assert len(run.attackers) == 10
    last = run.metrics[-1]
    assert 0 <= last["avg_rep_malicious"] <= last["avg_rep_legit"] <= 4096
    assert run.chain_jsonl() == sc.run().chain_jsonl()

    with tempfile.TemporaryDirectory() as out:
        run.write(out)
        manifest = json.loads((Path(out) / "manifest.json").read_text())
        assert manifest["tip_hash"] == run.tip_hash()

    strict = rc.Scenario("duration_s = 1200\nthreshold = 2048.0\n").run()
    assert strict.halt is not None and strict.halt["attempts"] > 10

    print(f"ok: {len(run)} blocks, final legit reputation {last['avg_rep_legit']:.0f}")


if __name__ == "__main__":
    main()

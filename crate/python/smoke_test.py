"""Smoke test for the pycarleman extension.

Build and install first:
    pip install --no-build-isolation ./crates/python
"""

import json
import sys

import pycarleman


def main():
    assert "tower prop15" in pycarleman.commands()

    code, body = pycarleman.run("weights analyze", "weights.kappa = 1\nweights.p = 1/2\n")
    report = json.loads(body)
    assert code == 0, code
    assert report["result"]["mu_verdict"] == "infinite"
    assert report["result"]["regularity_branch"] == "branch1"
    assert report["config"]["weights.p"] == "1/2"

    code, body = pycarleman.run("tower prop15", "tower.n_max = 6\n", format="csv")
    assert code == 0
    header, *rows = body.strip().splitlines()
    assert header.startswith("s,r,n,p")
    assert len(rows) == 7

    # ||chi_[0,1] - 2 chi_[3/2,2]||_{1/2} = (1 + sqrt(2)/2)^2
    v = pycarleman.step_quasinorm(["0", "1", "3/2", "2"], ["1", "0", "-2"], "1/2")
    want = (1 + 2 ** 0.5 / 2) ** 2
    assert abs(v - want) < 1e-12 * want, (v, want)

    r = json.loads(pycarleman.top_derivative_report("1", "1/4", 5, "1/2"))
    assert r["sup_match"] and r["lp_exact_match"] and r["structural_match"]

    try:
        pycarleman.run("weights analyze", "weights.kappa = 1\nweights.p = 3/2\n")
    except ValueError:
        pass
    else:
        raise AssertionError("p = 3/2 accepted")

    print("pycarleman smoke test: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())

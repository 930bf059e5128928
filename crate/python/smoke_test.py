"""Smoke test for the softfoot_py extension module.

Build with `cargo build --release -p softfoot-py --features extension-module`
and put the resulting library on the path as `softfoot_py.so`.
"""

import math
import sys

import softfoot_py as sf


def main():
    model = sf.FootModel.default()
    assert model.validate() == [], model.validate()
    assert len(model.sole_ids) == 9
    assert model.dof == 10

    again = sf.FootModel.from_json(model.to_json())
    assert again.to_json() == model.to_json()

    try:
        sf.FootModel.from_json("{")
    except ValueError:
        pass
    else:
        raise AssertionError("bad JSON accepted")

    e = sf.gent_modulus(30.0)
    assert 0.5e6 < e < 2.0e6, e

    kin = sf.kinematics(model, 0.05)
    assert kin["closure_residual"] < 1e-9
    assert len(kin["poses"]) >= 10

    flat = sf.tendon(model)
    bent = sf.tendon(model, [0.0] * 7 + [math.radians(20.0)])
    assert bent["length"] > flat["length"]
    assert bent["tension"] > 0.0

    assert len(sf.enumerate_trials()) == 48
    r = sf.run_trial(model, 12.0, 15.0, 3)
    assert r["failure"] is None, r["failure"]
    total = sum(r["forces"])
    assert abs(total - r["expected_total"]) / r["expected_total"] < 0.01

    assert sf.relative_error(11.0, 10.0) == 0.1
    assert sf.relative_error(1.0, 0.0) is None
    errs, offset = sf.rotation_errors([0.1, 0.2], [0.0, 0.1])
    assert abs(offset - 0.1) < 1e-12 and all(abs(x) < 1e-12 for x in errs)

    xml = sf.export_mjcf(model)
    assert xml.count("<connect") == 1
    assert len(sf.baseline_rows()) == 4

    print("softfoot_py", sf.__version__, "ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Smoke test for the softik_py extension.

Build and install first, e.g. `maturin develop` or
`pip install --no-build-isolation crates/py`, then run this file.
"""

import math
import tempfile

import softik_py as sk


def main():
    p = sk.forward_kinematics("three_chamber", [0.0, 0.0, 0.0])
    assert all(math.isclose(a, b, abs_tol=1e-9) for a, b in zip(p, [0.0, 0.0, 60.0])), p

    lo, hi, width = sk.workspace("planar_finger", 9)
    assert len(lo) == 2 and width > 200

    curve = sk.body_curve("planar_finger", [1.0, -0.5, 2.0], 8)
    tip = sk.forward_kinematics("planar_finger", [1.0, -0.5, 2.0])
    assert all(math.isclose(a, b, abs_tol=1e-6) for a, b in zip(curve[-1], tip))

    b = sk.Bundle.train("three_chamber", epoch_scale=0.1, segments=8)
    assert b.robot == "three_chamber" and b.m == 3 and b.n == 3 and b.has_s2r

    _, p_real = b.predict([1.0, 2.0, 0.5])
    sol = b.solve(p_real)
    assert sol.status == "converged", sol
    assert len(b.jacobian(sol.c)) == 3

    far = b.solve([500.0, 0.0, 60.0])
    assert far.status == "stalled", far

    path = [[p_real[0] + 0.2 * k, p_real[1], p_real[2]] for k in range(5)]
    assert len(b.follow(path)) == 5

    with tempfile.TemporaryDirectory() as d:
        b.save(d)
        again = sk.Bundle.load(d)
        assert again.predict([1.0, 2.0, 0.5]) == b.predict([1.0, 2.0, 0.5])

    try:
        b.predict([5.0, 0.0, 0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-range actuation accepted")

    print("softik_py smoke test passed:", b, sol)


if __name__ == "__main__":
    main()

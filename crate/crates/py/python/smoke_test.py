"""Smoke test for the strongdamp_py extension module."""

import math
import tempfile

import strongdamp_py as sd


def main():
    p1 = sd.Problem.preset("p1")
    assert (p1.d, p1.r) == (1, 1)
    assert p1.equilibrium == [0.0]

    report = p1.validate(samples=200, seed=1)
    assert all(c["passed"] for c in report["checks"]), report

    tr = sd.simulate(p1, eps=0.2, t_end=1.0, h=0.01, seed=3)
    assert len(tr["t"]) == 101 and len(tr["q"]) == 101
    again = sd.simulate(p1, eps=0.2, t_end=1.0, h=0.01, seed=3)
    assert again["q"] == tr["q"]

    v = sd.quasipotential(p1, [1.0])
    assert abs(v["value"] - 1.0) < 0.02, v["value"]
    assert sd.gradient_oracle(p1, [1.0]) == 1.0

    b = sd.boundary_minimum(sd.Problem.preset("tilted"), samples=2)
    assert abs(b["q_star"][0] + 1.0) < 1e-9

    line = [[k / 16.0] for k in range(17)]
    assert sd.path_action(p1, line, 2.0) > 0.0

    kpp = sd.Problem.preset("kpp_1d")
    rg = sd.r_general(kpp, [0.5], 1.0, n=32)
    rt = sd.r_tilde(kpp, [0.5], 1.0, n=32)
    assert rg["value"] >= rt["value"] - 1e-9

    speed = sd.front_speed(sd.Problem.preset("huygens_2d"), [-2.0, -2.0], [2.0, 2.0], 0.04, 1.0, [0.5, 1.0])
    assert abs(speed["speed"] / math.sqrt(2.0) - 1.0) < 0.1, speed

    try:
        sd.Problem.from_json('{"d": 1}')
    except ValueError:
        pass
    else:
        raise AssertionError("incomplete problems must be rejected")

    with tempfile.TemporaryDirectory() as out:
        run = sd.run_suite(20240607, out, criteria=[3])
        assert run["all_passed"], run["lines"]

    print("strongdamp_py", sd.__version__, "ok")


if __name__ == "__main__":
    main()

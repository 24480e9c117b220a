"""Smoke test for the hopf_energy extension module.

Build and install first:

    cd crates/python && maturin develop --release

then run ``python python/smoke_test.py``.
"""

import json
import math

import hopf_energy as he


def main():
    cap = he.Domain.cap(1, 1.0)
    assert abs(cap.exact_volume() - 2 * math.pi * (1 - math.sin(1) * math.cos(1))) < 1e-12

    rule = he.QuadratureRule(cap, 16, 8)
    hopf = he.Field.hopf(1)
    rep = he.energy(hopf, rule)
    assert abs(rep.bound - he.energy_lower_bound(1, rep.vol_k)) < 1e-12
    assert abs(rep.gap) < 1e-9 * rep.vol_k, rep
    assert json.loads(rep.to_json())["k"] == 1

    x = he.SpherePoint.from_ambient([1.0, 2.0, -0.5, 0.25])
    v = hopf.eval(x)
    assert abs(sum(a * b for a, b in zip(v, x.coords))) < 1e-12
    assert abs(sum(a * a for a in v) - 1.0) < 1e-12
    sigma = hopf.sigma(x)
    assert abs(sigma[0]) < 1e-10 and abs(sigma[1] - 1.0) < 1e-10
    numeric, formula = hopf.jacobian_det(x, 0.1)
    assert abs(numeric - formula) < 1e-5 * formula

    moments = json.loads(he.moment_identities(hopf, rule))
    assert max(abs(r) for r in moments["residual_direct"]) < 1e-6 * moments["vol_k"]

    lab = json.loads(he.verify_identities(samples=200, dims=[2, 4], seed=3))
    assert lab["passed"]

    cfg = json.dumps({"radial": 6, "angular": 4, "max_iters": 50})
    obj0 = he.penalized_objective([0.0] * 12, cfg)
    assert abs(obj0 - 2.5 * rule.volume()) < 1e-3 * rule.volume()
    run = json.loads(he.minimize(cfg))
    assert run["final_energy"]["energy"] >= run["final_energy"]["bound"] - 1e-3 * run["final_energy"]["vol_k"]

    same = he.Field.from_json(hopf.to_json())
    assert same.to_json() == hopf.to_json()
    try:
        he.SpherePoint([1.0, 1.0, 0.0, 0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("non-unit point accepted")

    print("hopf_energy", he.__version__, "smoke test ok")


if __name__ == "__main__":
    main()

"""Smoke test of the Python bindings against closed-form solutions.

Build and install first:
    pip install --no-build-isolation -e crates/g2soliton-py
Run with ``python python/smoke_test.py`` or ``pytest python/smoke_test.py``.
"""

import math

import g2soliton_py as g

SQRT2 = math.sqrt(2.0)


def rel(a, b):
    return abs(a - b) / abs(b)


def test_params_and_points():
    p = g.ClosureParams(-2.25, 1.0)
    assert (p.lambda_, p.b, p.c, p.group) == (-2.25, 1.0, 0.0, "su3")
    try:
        g.ClosureParams(0.0, -1.0, 0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative b accepted")
    x = g.PhasePoint([math.sqrt(0.5), math.sqrt(3.0), math.sqrt(1.5)], [1 / 6, 4.0, -2.5])
    assert abs(x.constraint_residual()) < 1e-15
    obs = x.observables(0.0)
    assert abs(obs["u"] - 1 / 3) < 1e-15
    assert abs(obs["norm_tau_sq"] - 14 / 3) < 1e-13
    assert abs(obs["scalar_curvature"] + 7 / 3) < 1e-13


def test_series_and_seed():
    s = g.series(g.ClosureParams(0.0, SQRT2, 3.0), 8)
    assert abs(s["f1"][3] - 1 / 24) < 1e-15
    assert abs(g.series(g.ClosureParams(0.0, 1.0, 0.0), 8)["f1"][3] + 1 / 6) < 1e-15
    seed = g.seed_point(g.ClosureParams(0.0, SQRT2, 3.0), 0.1, 12)
    exact, _ = g.explicit_steady(0.1)
    assert all(abs(a - b) < 1e-10 for a, b in zip(seed.f, exact.f))


def test_steady_integration_and_classification():
    traj = g.integrate(g.ClosureParams(0.0, SQRT2, 3.0), t_max=10.0, t0=0.1, dt=1.0)
    assert traj.t[-1] == 10.0
    exact, _ = g.explicit_steady(10.0)
    assert all(rel(a, b) < 1e-6 for a, b in zip(traj.f[-1], exact.f))
    blow = g.integrate(g.ClosureParams(0.0, 1.0, 3.0), t_max=50.0)
    kind, t_end = blow.termination
    assert kind == "blow-up" and 0.0 < t_end < 50.0
    assert blow.classify()[0] == "Inc"
    tag, rate = g.classify_steady(2.0, 3.0)
    assert tag == "AC" and abs(rate + 1.0) < 0.1
    assert g.classify_steady_params(SQRT2, 3.0) == "Exp"


def test_shrinker_to_t20():
    out = g.integrate_extended(g.ClosureParams(-2.25, 1.0), [10.0, 20.0])
    for t, x in out:
        exact, _, _ = g.explicit_shrinker(1.0, t)
        assert all(rel(a, b) < 1e-6 for a, b in zip(x.f, exact.f))


def test_spectra_and_oracles():
    ev = g.cone_spectrum()
    assert all(abs(a - b) < 1e-12 for a, b in zip(ev, [-2.0, -2.0, -0.5, -0.5]))
    fps = g.poly_fixed_points(3.0)
    assert fps[1][0] == [1.0, 1.0, 0.0]
    assert all(item[1] for item in g.oracle_check())


def test_boundary():
    est, (lo, hi) = g.find_boundary(3.0, 1.2, 1.6, 1e-3)
    assert abs(est - SQRT2) < 1e-3 and hi - lo <= 1e-3


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")

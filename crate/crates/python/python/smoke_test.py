"""Smoke test for the apgnc extension. Build first: maturin develop (or pip install a wheel)."""

import math

import apgnc


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    assert close(apgnc.t_update(1.0), (math.sqrt(5.0) + 1.0) / 2.0)
    assert apgnc.accept_step(1.0, 1.0) == "prox"
    assert apgnc.accept_step(2.0, 1.0) == "extrapolation"
    assert apgnc.prox_l1([3.0, -0.5, -2.0], 1.0, 1.0) == [2.0, 0.0, -1.0]
    assert apgnc.prox_nonneg([1.0, -1.0]) == [1.0, 0.0]
    assert apgnc.check_rho_condition(0.1, 1, False)

    obj = apgnc.Objective.nnpca(200, 50, seed=2)
    assert obj.dim == 50 and obj.n == 200 and obj.lipschitz > 0
    x0 = apgnc.nonneg_unit_start(50, 1002)
    assert math.isinf(obj.value([-1.0] + x0[1:]))

    g = obj.gradient(x0)
    for i in (0, 7, 199):
        assert obj.svrg_gradient_estimate(x0, x0, g, i) == g
    try:
        obj.svrg_gradient_estimate(x0, x0, g, 200)
        raise AssertionError("expected IndexError")
    except IndexError:
        pass

    tr = apgnc.solve(obj, x0, "apgnc", budget=5000, residual_tol=1e-6)
    assert tr.terminated_by == "tolerance", tr
    assert all(b <= a + 1e-10 for a, b in zip(tr.f_y, tr.f_y[1:]))
    assert tr.final_value == tr.f_x[-1]
    assert obj.kkt_residual(tr.final_x) <= 1e-6

    mapg = apgnc.solve(obj, x0, "mapg", budget=20)
    assert mapg.passes[:3] == [2.0, 4.0, 6.0]
    sv = apgnc.solve(obj, x0, "svrg_apgnc", budget=30, seed=3)
    again = apgnc.solve(obj, x0, "svrg_apgnc", budget=30, seed=3)
    assert sv.f_x == again.f_x and sv.final_value < sv.initial_value

    quad = apgnc.Objective.quadratic([1.0, 2.0, 5.0, 10.0], seed=1)
    r = apgnc.solve(quad, [1.0, 1.0, 1.0, 1.0], "pg", budget=400).f_x
    rho, r2 = apgnc.fit_linear_rate(r[: r.index(0.0)] if 0.0 in r else r)
    assert 0.0 < rho < 1.0 and r2 > 0.99

    quart = apgnc.Objective.quartic(5)
    r = apgnc.solve(quart, [1.0] * 5, "pg", budget=4000, step_scale=0.5).f_x
    p, _ = apgnc.fit_power_rate(r)
    assert 1.5 <= p <= 2.5, p

    print("smoke test passed:", tr)


if __name__ == "__main__":
    main()

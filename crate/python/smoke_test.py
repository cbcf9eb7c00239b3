"""Quick check that the extension imports and the solvers run."""

import math

import gldmfg_py as g


def main():
    assert math.isclose(g.exp_q(0.5, 1.0), math.exp(0.5), rel_tol=1e-14)
    assert math.isclose(g.ln_q(g.exp_q(0.3, 0.5), 0.5), 0.3, rel_tol=1e-12)
    assert math.isinf(g.theta_bar(1.0, 0.5, 1.0)) or g.theta_bar(1.0, 0.5, 1.0) > 0

    try:
        g.exp_q(0.0, 0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("q = 0 accepted")

    s = g.Scenario.fishing()
    s.set_grid(20, 2000, 100.0)
    gld = s.run_gld()
    dx = gld.x[1] - gld.x[0]
    for p, m in zip(gld.density, s.masses):
        assert min(p) >= 0.0
        assert abs(sum(p) * dx - m) < 1e-12
    print(f"gld: {gld.steps} steps, residual {gld.residual:.2e}")

    s.delta = 1.0
    s.set_tsallis(0.5, 0.01)
    mfg = s.run_mfg()
    print(f"mfg: {mfg.iterations} iterations, slope {mfg.log10_slope():.3f}")
    assert mfg.max_mass_defect < 1e-12

    s.max_iters = 1
    try:
        s.run_mfg()
    except g.NotConvergedError:
        pass
    else:
        raise AssertionError("expected NotConvergedError")
    print("ok")


if __name__ == "__main__":
    main()

"""Smoke test for the Python bindings.

Build first, for example with `maturin develop -m crates/python/Cargo.toml`,
or copy target/release/libising_memory_py.so to ising_memory_py.so on the path.
"""

import math
import tempfile

import ising_memory_py as im


def main():
    g = im.Geometry(2, 3)
    assert g.n == 9 and len(g.bonds()) == 12
    assert sorted(g.neighbors(4)) == [1, 3, 5, 7]

    times = [0.25 * k for k in range(41)]
    exact = im.exact_fidelity(g, 2.5, times)
    mc = im.simulate(g, 2.5, 20000, times, seed=1)
    assert exact.fidelity[0] == 1.0 and mc.fidelity[0] == 1.0
    worst = max(abs(a - b) / s for a, b, s in zip(mc.fidelity, exact.fidelity, mc.sigma))
    assert worst < 5.0, worst
    print(f"2D 3x3 MC vs exact: max deviation {worst:.2f} sigma")

    assert math.isclose(im.gaussian_fidelity(40.0, 0.2, 0.0), 1.0)
    assert math.isclose(im.exponential_fidelity(0.3, 1e6), 0.5)
    assert abs(im.binomial_fidelity(100, 0.5, 50.0, "random-choice") - 0.5) < 1e-6
    assert im.binomial_fidelity(100, 0.5, 50.0) < 0.5
    assert im.sigma_f(1.0, 100) == 0.005

    chain = im.Geometry(1, 100)
    curve = im.simulate(chain, 2.5, 2000, [0.2 * k for k in range(200)], seed=1)
    fit = im.fit_gaussian(curve)
    lo, hi = fit.lambda_interval
    assert fit.converged and lo <= fit.lambda_ <= hi
    print(repr(fit))
    exp = im.fit_exponential(curve)
    print(f"reduced chi2: gaussian {fit.reduced_chi2:.2f}, exponential {exp.reduced_chi2:.2f}")

    with tempfile.TemporaryDirectory() as d:
        path = f"{d}/c.dat"
        curve.write(path)
        back = im.FidelityCurve.read(path)
        assert back.fidelity == curve.fidelity and back.times == curve.times

        summary = im.run_sweep(
            {"dimension": 1, "sizes": "36,64,100,144", "temperatures": "3", "M": 300,
             "points": 60, "outdir": f"{d}/sw"}
        )
        assert len(summary.strip().splitlines()) == 5
        print(im.scaling_report(f"{d}/sw").splitlines()[0])

    try:
        im.Geometry(3, 4)
    except ValueError:
        pass
    else:
        raise AssertionError("3D lattice accepted")
    print("smoke test ok")


if __name__ == "__main__":
    main()

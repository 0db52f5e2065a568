"""Smoke test for the pymspinn extension: oracles, spectra, networks and a tiny run."""

import math
import os
import tempfile

import pymspinn as mp


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    close(mp.bessel_j(0, 2.404825557695773), 0.0, 1e-12)
    close(mp.bessel_y(0, 1.0), 0.08825696421567696, 1e-12)
    close(mp.burgers_solution(0.5, 0.0), -1.0, 1e-14)
    re, im = mp.mie_field(0.3, -0.2, eps_r=1.0)
    close(re, math.cos(2 * math.pi * 0.3), 1e-8)
    close(im, math.sin(2 * math.pi * 0.3), 1e-8)

    nx = ny = 16
    values = [
        0.7 * math.cos(2 * math.pi * 3 * (i / nx) + 0.4)
        for i in range(nx)
        for _ in range(ny)
    ]
    (kx, ky, amp, phase), = mp.top_modes(values, nx, ny, [[0.0, 1.0], [0.0, 1.0]], 1)
    close(abs(kx), 6 * math.pi, 1e-12)
    close(ky, 0.0, 1e-12)
    close(amp, 0.7, 1e-12)
    close(math.cos(phase), math.cos(0.4 if kx > 0 else -0.4), 1e-12)
    assert len(mp.psd(values, nx, ny, [[0.0, 1.0], [0.0, 1.0]])) == nx * ny

    net = mp.Network.xavier([2, 8, 1], 3)
    assert net.dims == [2, 8, 1]
    (jet,) = net.jets([[0.1, 0.2]])
    assert len(jet) == 5

    cfg = mp.RunConfig(
        """
        method = "rff_mspinn"
        stages = 1
        seed = 4
        spectrum_grid = [8, 8]
        eval_grid = [6, 6]
        [init]
        depth = 2
        width = 6
        features = 4
        [optim]
        adam_steps = 20
        lbfgs_max_iters = 5
        [collocation]
        interior = 50
        boundary = 10
        initial = 10
        """
    )
    assert cfg.method == "rff_mspinn"
    sol, report = mp.run(cfg)
    assert sol.n_stages == 2 and sol.epsilons[0] == 1.0
    assert "l2_errors" in report
    (u,) = sol.values([[0.25, 0.5]])
    assert math.isfinite(u[0])
    errs = sol.l2_errors(6, 6)
    assert len(errs) == 1 and errs[0] > 0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "solution.ckpt")
        sol.save(path)
        back = mp.Solution.load(path)
        assert back.values([[0.25, 0.5]]) == sol.values([[0.25, 0.5]])

    try:
        mp.RunConfig('method = "nope"')
    except ValueError as e:
        assert "nope" in str(e)
    else:
        raise AssertionError("invalid method accepted")

    print("pymspinn smoke test passed")


if __name__ == "__main__":
    main()

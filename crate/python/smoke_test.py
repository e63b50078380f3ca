"""Smoke test for the degenwave extension module."""

import json
import math

import degenwave


def main():
    grid = degenwave.Grid(1, 64, 2 * math.pi)
    xs = [c[0] for c in grid.coords()]
    d = grid.derivative([math.sin(x) for x in xs], 0, 1)
    assert max(abs(a - math.cos(x)) for a, x in zip(d, xs)) < 1e-12
    assert abs(grid.integrate([1.0] * len(grid)) - 2 * math.pi) < 1e-12

    psi, pi = degenwave.homogeneous_reference(0.0, -0.5, 1.0)
    assert abs(psi + 0.5) < 1e-15 and pi == -0.5

    state = degenwave.State(grid, [0.0] * 64, [-0.5] * 64, p=1)
    for _ in range(10):
        state = state.step(0.1)
    assert abs(state.min_one_plus_psi() - 0.5) < 1e-12
    assert abs(state.energy()["total"]) < 1e-20

    bump_grid = degenwave.Grid(1, 128, 48.0)
    psi0, pi0 = bump_grid.bump(6.0, 0.05, -0.5)
    eps_ring, delta_ring, delta_star = bump_grid.data_size(psi0, pi0)
    assert abs(delta_star - 0.5) < 1e-12 and eps_ring > 0.0

    config = json.dumps({
        "P": 1,
        "grid": {"dim": 1, "n": 128, "box_length": 48},
        "data": {"family": "bump", "radius": 6, "amp_psi": 0.05, "amp_pi": -0.5},
        "t_max": 3.0,
    })
    summary = degenwave.run(config)
    assert summary["stop_reason"] == "degeneracy_reached"
    rows = degenwave.sweep(config, [1.0, 2.0], compare_p=True)
    assert len(rows) == 4

    assert degenwave.leading_coefficient(1) == 7.5
    assert degenwave.leading_coefficient(2) == 60.0
    print("smoke test passed:", summary["T_star_estimate"])


if __name__ == "__main__":
    main()

"""Smoke test for the `fano` extension module.

Build and install first, e.g. `pip install --no-build-isolation ./crates/python`.
"""

import math

import fano

CONFIG = """
[model]
statistics = "fermion"
epsilon = [[0.3]]

[[model.reservoirs]]
band = { count = 6, low = -1.5, high = 1.5, gamma = 0.2 }

[initial_state]
kind = "partition_free"
beta = 2.0

[grid]
t_final = 5.0
steps = 250
"""


def main():
    cfg = fano.Config.from_toml(CONFIG)
    assert (cfg.levels, cfg.modes, cfg.steps) == (1, 6, 250)
    assert len(cfg.config_hash) == 64
    print(cfg)

    sim = fano.Simulation(cfg)
    times = sim.times()
    assert len(times) == 251 and times[-1] == 5.0

    traces = sim.traces()
    assert max(abs(t - 1.0) for t in traces) < 1e-8
    assert min(sim.min_eigenvalues()) > -1e-6

    occ = [row[0] for row in sim.occupations()]
    assert all(0.0 <= n <= 1.0 for n in occ)

    coeffs = sim.coefficients(100)
    assert set(coeffs) == {"eps_prime", "gamma", "gamma_tilde", "gamma_bar"}
    assert abs(coeffs["gamma_bar"][0][0]) == 0.0

    g, gbar = sim.lesser_green(250)
    assert abs((-1j * g[0][0]).real - occ[-1]) < 1e-4

    errors = sim.compare()
    assert errors["u_err"] < 1e-3 and errors["trace_dist"] < 1e-3, errors
    print("max errors vs exact dynamics:", errors)

    coarse = fano.Simulation(cfg.with_steps(100), evolve_state=False)
    try:
        coarse.traces()
    except fano.FanoError:
        pass
    else:
        raise AssertionError("traces() without an evolved state should fail")

    fock = fano.FockSpace("fermion", 2)
    assert fock.dim == 4
    a0 = fock.annihilation(0)
    assert len(a0) == 4

    f = fano.occupation("fermion", 2.0, 0.3)
    assert abs(f - 1.0 / (math.exp(0.6) + 1.0)) < 1e-15
    assert fano.boson_cutoff(0.5) == 17

    try:
        fano.Config.from_toml(CONFIG.replace("t_final", "t_finale"))
    except fano.FanoError as e:
        print("rejected bad config:", e)
    else:
        raise AssertionError("unknown key accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()

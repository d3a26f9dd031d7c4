"""Smoke test for the lulc_ppo extension module.

Build and install first, e.g. ``maturin develop --release`` or
``maturin build --release && pip install target/wheels/lulc_ppo-*.whl``,
then run ``python python/smoke_test.py``.
"""

import os
import random
import tempfile

import lulc_ppo


def main():
    grid = lulc_ppo.seed_grid()
    hist = grid.histogram()
    assert list(hist.values()) == [5, 93, 4, 30, 138, 718, 12], hist
    assert grid.frozen_count == 105
    assert len(grid) == 1000

    # rational method by hand: Q = sum C * i * A / 3.6e6
    table = lulc_ppo.CoefficientTable()
    coeffs = table.coefficients()
    names = lulc_ppo.CLASS_NAMES
    manual = sum(coeffs[names[c]] * 10.0 * 900.0 / 3.6e6 for c in grid.cells)
    q = lulc_ppo.compute_runoff(grid)
    assert abs(q - manual) <= 1e-12 * manual, (q, manual)
    print(f"existing runoff: {q:.6f} m3/s")

    s1 = lulc_ppo.apply_scenario(grid, "s1")
    assert list(s1["after"].values()) == [5, 93, 2, 30, 211, 646, 13], s1
    assert s1["residual_assigned_to"] == "grassland"
    print(f"s1 runoff: {s1['runoff_m3_per_s']:.6f} m3/s")

    with tempfile.TemporaryDirectory() as d:
        bad = os.path.join(d, "grow.csv")
        with open(bad, "w") as f:
            f.write("barren,2\nwater,2\n")
        try:
            lulc_ppo.apply_scenario(grid, bad)
        except lulc_ppo.InfeasibleScenarioError as e:
            print(f"infeasible as expected: {e}")
        else:
            raise AssertionError("scenario should be infeasible")

    env = lulc_ppo.Env(grid)
    rng = random.Random(0)
    total = 0.0
    done = False
    while not done:
        mask = env.action_mask()
        action = rng.choice([a for a in range(lulc_ppo.Env.NUM_ACTIONS) if mask[a]])
        _, reward, done, _ = env.step(action)
        total += reward
    assert abs(total / 1e3 - (env.baseline_runoff_m3_per_s - env.runoff_m3_per_s)) < 1e-9
    after = env.grid().cells
    frozen = grid.frozen_mask
    assert all(a == b for a, b, f in zip(after, grid.cells, frozen) if f)

    trainer = lulc_ppo.Trainer(
        grid, seed=3, config_toml="[ppo]\nrollout_horizon = 256\nminibatch_size = 64\n"
    )
    stats = trainer.train(3)
    assert [s["update"] for s in stats] == [1, 2, 3]
    policy = trainer.policy()
    run = policy.run_greedy(grid, steps=0)
    assert run["final_grid"] == grid
    matrix = run["transition"]
    assert [sum(row) for row in matrix] == [5, 93, 4, 30, 138, 718, 12]

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "checkpoint.json")
        trainer.save_checkpoint(path)
        loaded = lulc_ppo.Policy.load(path)
        obs = env.reset()
        assert loaded.probabilities(obs) == policy.probabilities(obs)
        with open(path, "r+") as f:
            text = f.read().replace('"version":1', '"version":7', 1)
            f.seek(0)
            f.write(text)
            f.truncate()
        try:
            lulc_ppo.Policy.load(path)
        except lulc_ppo.CheckpointError as e:
            assert "version" in str(e)
        else:
            raise AssertionError("tampered checkpoint should fail to load")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()

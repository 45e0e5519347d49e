"""Smoke test of the aoii extension module.

Build and install first, e.g. `pip install --no-build-isolation -e crates/py`,
then run `python crates/py/python/smoke_test.py`.
"""

import math

import aoii


def main():
    params = aoii.ChainParams(0.05, 30, 15, 25)
    states = params.states()
    assert states[0] == (0, 0)
    assert len(states) == params.num_states
    assert params.index(3, 2) == states.index((3, 2))

    policy = aoii.threshold_policy(params, 20.0, 0.2)
    assert policy[0] == 0.0
    st = aoii.stationary_dist(params, policy)
    assert abs(sum(st.dist) - 1.0) < 1e-9
    assert 0.0 <= st.ell <= 1.0

    b = aoii.bound(params, policy, st.dist)
    truncated = aoii.truncated_aoii(params, st.dist)
    assert b.total >= truncated > 0.0

    q = 0.3
    series = sum(q * (1 - q) ** i * (30 + i) * (15 + i) for i in range(2000))
    assert math.isclose(aoii.geometric_tail(30, 15, q), series, rel_tol=1e-10)
    assert math.isclose(aoii.scale_tau(50.0, 0.05, 0.05), 50.0)

    seed_pi, seed_phi = aoii.seed_init(params, 1.0)
    assert len(seed_pi) == len(seed_phi) == params.num_states

    result = aoii.optimize(params, max_steps=300, checkpoint_every=100)
    assert len(result.policy) == params.num_states
    assert all(0.0 <= p <= 1.0 for p in result.policy)
    assert result.trace[0][0] == "calibration"

    ours = aoii.simulate(params, policy=result.policy, horizon=20_000, seed=3)
    pt1 = aoii.simulate(params, benchmark="pt1", horizon=20_000, seed=3)
    pte = aoii.simulate(params, benchmark=f"pte:{ours.avg_load}", horizon=20_000, seed=3)
    for r in (ours, pt1, pte):
        assert math.isclose(r.success_rate + r.collision_rate + r.idle_rate, 1.0)
    again = aoii.simulate(params, policy=result.policy, horizon=20_000, seed=3)
    assert again.avg_aoii == ours.avg_aoii

    for bad in (lambda: aoii.ChainParams(0.7, 30, 15, 25), lambda: aoii.stationary_dist(params, [0.5])):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")

    print(f"bound {b.total:.3f} >= truncated {truncated:.3f}")
    print(f"300-step run at F=30 (too short and too small to be competitive): AoII {ours.avg_aoii:.2f} load {ours.avg_load:.3f}; PT1 {pt1.avg_aoii:.2f}; PTE {pte.avg_aoii:.2f}")
    print("smoke test passed")


if __name__ == "__main__":
    main()

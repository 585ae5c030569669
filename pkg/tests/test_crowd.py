import math

import numpy as np
import pytest

from helpers import (
    feasible_orca,
    orca_brute_force,
    rand_orca_case,
    rand_sfm_case,
)
from sketchnav.crowd import (
    DEFAULT_ORCA,
    DEFAULT_SFM,
    F_MAX,
    SPEED_CAP_FACTOR,
    WAYPOINT_TOLERANCE,
    DiscAgent,
    OrcaParams,
    PedModel,
    Pedestrian,
    observe_pedestrians,
    orca_lines,
    orca_velocity,
    sfm_accel,
    step_crowd,
)
from helpers import sfm_oracle
from sketchnav.world import World


def test_pedestrian_validation():
    with pytest.raises(ValueError):
        Pedestrian(id="p", position=(0, 0), radius=0.0)
    with pytest.raises(ValueError):
        Pedestrian(id="p", position=(0, 0), v0=-1.0)
    p = Pedestrian(id="p", position=(0, 0), v0=1.0)
    assert p.max_speed == pytest.approx(SPEED_CAP_FACTOR)


def test_pedestrian_json_round_trip():
    # scenario schema carries start state only, not runtime fields
    p = Pedestrian(
        id="VIP05",
        position=(1.5, 2.5),
        v0=1.1,
        waypoints=((3.0, 3.0), (5.0, 1.0)),
        model=PedModel.ORCA,
        vip=True,
        loop=False,
    )
    again = Pedestrian.from_json(p.to_json())
    assert again == p
    scripted = Pedestrian(id="s", position=(0, 0), model=PedModel.SCRIPTED,
                          script=((0, 0), (0.1, 0)))
    assert Pedestrian.from_json(scripted.to_json()) == scripted


def test_sfm_matches_oracle_randomized():
    rng = np.random.default_rng(21)
    worst = 0.0
    for _ in range(300):
        p, others, world = rand_sfm_case(rng)
        got = sfm_accel(p, others, world, DEFAULT_SFM)
        want = sfm_oracle(p, others, world, DEFAULT_SFM)
        worst = max(worst, abs(got[0] - want[0]), abs(got[1] - want[1]))
    assert worst < 1e-9, f"worst component error {worst}"


def test_sfm_coincident_discs_capped():
    p = Pedestrian(id="a", position=(2, 2), v0=1.0, velocity=(0, 0))
    other = DiscAgent(position=(2, 2), velocity=(0, 0), radius=0.3)
    ax, ay = sfm_accel(p, [other], None)
    assert ax == pytest.approx(F_MAX)
    assert ay == pytest.approx(0.0)


def test_sfm_repulsion_cap_applies_to_deep_overlap():
    # r_sum 1.8 at distance 0.5 drives the exponential past the cap
    p = Pedestrian(id="a", position=(2.0, 2.0), v0=1.0)
    other = DiscAgent(position=(2.5, 2.0), velocity=(0, 0), radius=1.5)
    ax, ay = sfm_accel(p, [other], None)
    assert ax == pytest.approx(-F_MAX)  # pushed away along -x, capped
    assert ay == pytest.approx(0.0)


def test_sfm_drive_term_alone():
    # no neighbors, no world: pure relaxation toward v0 * e
    p = Pedestrian(id="a", position=(0, 0), v0=1.0, velocity=(0.2, 0.0),
                   waypoints=((10.0, 0.0),))
    ax, ay = sfm_accel(p, [], None)
    assert ax == pytest.approx((1.0 - 0.2) / DEFAULT_SFM.tau)
    assert ay == pytest.approx(0.0)


def test_orca_within_brute_force_tolerance():
    rng = np.random.default_rng(22)
    worst = 0.0
    for _ in range(60):
        p, others = rand_orca_case(rng)
        got = np.array(orca_velocity(p, others, dt=0.1))
        lines = orca_lines(p, others, 0.1, DEFAULT_ORCA)
        best, pref = orca_brute_force(p, lines)
        pref = np.asarray(pref)
        assert np.hypot(*got) <= p.max_speed + 1e-9
        if best is None:
            continue  # infeasible grid: fallback LP result, nothing to compare
        best = np.asarray(best)
        assert feasible_orca(lines, got, eps=1e-7)
        # optimal means no feasible sample sits closer to the preference
        assert np.linalg.norm(got - pref) <= np.linalg.norm(best - pref) + 1e-9
        worst = max(worst, float(np.linalg.norm(got - best)))
    assert worst < 0.05, f"worst deviation from brute force {worst}"


def test_orca_no_neighbors_returns_preference():
    p = Pedestrian(id="a", position=(0, 0), v0=1.0, waypoints=((5.0, 0.0),))
    v = orca_velocity(p, [], dt=0.1)
    assert v == pytest.approx((1.0, 0.0))


def test_orca_head_on_pair_reciprocal():
    a = Pedestrian(id="a", position=(0.0, 0.0), velocity=(1.0, 0.0), v0=1.0,
                   model=PedModel.ORCA, waypoints=((10.0, 0.0),))
    b = Pedestrian(id="b", position=(3.4, 0.0), velocity=(-1.0, 0.0), v0=1.0,
                   model=PedModel.ORCA, waypoints=((-10.0, 0.0),))
    va = orca_velocity(a, [b], dt=0.1)
    vb = orca_velocity(b, [a], dt=0.1)
    assert abs(va[1]) > 1e-6 and abs(vb[1]) > 1e-6, "head-on pair must sidestep"
    assert va[1] * vb[1] < 0, f"lateral components must oppose: {va[1]} vs {vb[1]}"


def test_step_crowd_scripted_follows_script_and_holds_last():
    script = ((1.0, 1.0), (1.2, 1.0), (1.4, 1.1))
    p = Pedestrian(id="s", position=(1.0, 1.0), model=PedModel.SCRIPTED, script=script)
    peds = [p]
    seen = []
    for _ in range(5):
        peds = step_crowd(peds, None, 0.1)
        seen.append(peds[0].position)
    assert seen[0] == script[0]
    assert seen[1] == script[1]
    assert seen[2] == script[2]
    assert seen[3] == script[2] and seen[4] == script[2]
    # scripted velocity is clamped to the speed cap
    assert math.hypot(*peds[0].velocity) <= peds[0].max_speed + 1e-9


def test_step_crowd_sfm_euler_update():
    p = Pedestrian(id="a", position=(0.0, 0.0), v0=1.0, velocity=(0.0, 0.0),
                   waypoints=((10.0, 0.0),))
    out = step_crowd([p], None, 0.1)[0]
    ax, ay = sfm_accel(p, [], None)
    assert out.velocity == pytest.approx((ax * 0.1, ay * 0.1))
    assert out.position == pytest.approx((out.velocity[0] * 0.1, out.velocity[1] * 0.1))


def test_step_crowd_waypoint_advance_and_loop():
    p = Pedestrian(id="a", position=(1.0, 1.0), v0=1.0,
                   waypoints=((1.0, 1.0 + WAYPOINT_TOLERANCE - 0.05), (5.0, 1.0)),
                   waypoint_index=0)
    out = step_crowd([p], None, 0.1)[0]
    assert out.waypoint_index == 1
    # last waypoint reached wraps to the first when looping
    q = Pedestrian(id="b", position=(5.0, 1.0), v0=1.0,
                   waypoints=((0.0, 0.0), (5.0, 1.0)), waypoint_index=1, loop=True)
    assert step_crowd([q], None, 0.1)[0].waypoint_index == 0
    r = Pedestrian(id="c", position=(5.0, 1.0), v0=1.0,
                   waypoints=((0.0, 0.0), (5.0, 1.0)), waypoint_index=1, loop=False)
    assert step_crowd([r], None, 0.1)[0].waypoint_index == 2  # parked past the end


def test_step_crowd_reads_shared_snapshot():
    # both pedestrians must react to each other's PREVIOUS position, so the
    # result cannot depend on list order
    a = Pedestrian(id="a", position=(0.0, 0.0), v0=1.0, waypoints=((4.0, 0.0),))
    b = Pedestrian(id="b", position=(1.0, 0.0), v0=1.0, waypoints=((-3.0, 0.0),))
    out1 = step_crowd([a, b], None, 0.1)
    out2 = step_crowd([b, a], None, 0.1)
    by_id1 = {p.id: p for p in out1}
    by_id2 = {p.id: p for p in out2}
    for pid in ("a", "b"):
        assert by_id1[pid].position == pytest.approx(by_id2[pid].position)


def test_step_crowd_robot_repels():
    p = Pedestrian(id="a", position=(0.0, 0.0), v0=1.0, waypoints=((4.0, 0.0),))
    robot = DiscAgent(position=(0.5, 0.0), velocity=(0.0, 0.0), radius=0.3)
    free = step_crowd([p], None, 0.1)[0]
    blocked = step_crowd([p], None, 0.1, robot=robot)[0]
    assert blocked.velocity[0] < free.velocity[0]


def test_step_crowd_rejects_bad_dt():
    with pytest.raises(ValueError):
        step_crowd([], None, 0.0)


def test_step_crowd_wall_repulsion():
    world = World(bounds=(4, 4))
    p = Pedestrian(id="a", position=(0.4, 2.0), v0=1.0, waypoints=((0.4, 3.5),))
    out = step_crowd([p], world, 0.1)[0]
    assert out.velocity[0] > 0  # pushed off the x=0 wall


def test_observe_pedestrians_noise_and_vip_exact():
    rng = np.random.default_rng(5)
    peds = [
        Pedestrian(id="VIP01", position=(1.0, 1.0), vip=True),
        Pedestrian(id="p2", position=(3.0, 3.0)),
    ]
    noisy = observe_pedestrians(peds, sigma=0.2, rng=rng)
    assert noisy[0].position == (1.0, 1.0)
    assert noisy[1].position != (3.0, 3.0)
    # no rng or zero sigma: identity
    assert [p.position for p in observe_pedestrians(peds)] == [p.position for p in peds]


def test_orca_respects_time_horizon_param():
    # a farther neighbor only constrains with a longer horizon
    p = Pedestrian(id="a", position=(0.0, 0.0), velocity=(1.0, 0.0), v0=1.0,
                   waypoints=((10.0, 0.0),))
    other = DiscAgent(position=(2.8, 0.0), velocity=(-1.0, 0.0), radius=0.3)
    short = orca_velocity(p, [other], dt=0.1, params=OrcaParams(time_horizon=0.5))
    long = orca_velocity(p, [other], dt=0.1, params=OrcaParams(time_horizon=3.0))
    dev_short = abs(short[1])
    dev_long = abs(long[1])
    assert dev_long > dev_short

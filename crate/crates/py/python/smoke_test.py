"""Smoke test for the diffexplore_py extension module."""

import json
import math

import diffexplore_py as dx

ROOM = """\
##########
#........#
#........#
#...##...#
#...##...#
#........#
#........#
##########
"""


def main():
    world = dx.World.from_ascii(ROOM, 0.3)
    assert (world.width, world.height) == (10, 8)
    assert world.is_occupied(0, 0) and not world.is_occupied(1, 1)

    config = dx.Config()
    config.set("sensor_range", "2.0")
    config.set("max_episodes", "40")
    try:
        config.set("no_such_key", "1")
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("unknown key accepted")

    odds = dx.OccupancyMap.for_world(world)
    assert all(b == 0.0 for b in odds.boundariness(config))
    touched = odds.integrate_scan(world, (0.45, 0.45, math.pi / 4), config)
    touched += odds.integrate_scan(world, (0.45, 0.45, 0.0), config)
    lo, hi = odds.bounds
    assert touched > 0 and all(lo <= v <= hi for v in odds.values())
    bd = odds.boundariness(config)
    assert max(bd) > 0.5 and all(0.0 <= b <= 1.0 for b in bd)

    path = [(0.45, 0.45, 0.0), (0.77, 0.73, 0.31), (1.08, 0.62, -0.17), (1.65, 0.5, 0.0)]
    gain = dx.path_gain(odds, path, config, seed=3)
    print(f"view gain {dx.view_gain(odds, path[-1], config):.3f}, path gain {gain:.3f}")
    check = dx.gradient_check(odds, path, config, seed=3)
    print("gradient check", check)
    if check["branch_margin"] >= 1e-3:
        assert check["max_relative_error"] < 1e-4

    refined, values = dx.optimize(odds, path, config, seed=3)
    assert refined[0] == path[0] and refined[-1] == path[-1]
    assert all(b <= a for a, b in zip(values, values[1:]))

    odds2 = dx.OccupancyMap.from_csv(odds.to_csv())
    assert odds2.values() == odds.values()

    config.set("start_x", "0.45")
    config.set("start_y", "0.45")
    report = json.loads(dx.explore(world, config))
    again = dx.explore(world, config)
    assert json.dumps(report, sort_keys=True) == json.dumps(json.loads(again), sort_keys=True)
    print(
        f"explore: {report['status']}, {len(report['episodes'])} episodes, "
        f"coverage {report['final_coverage']['coverage']:.3f}"
    )
    print("ok")


if __name__ == "__main__":
    main()

import numpy as np
import pytest

from kernplan import dynamics as dyn
from kernplan import parking
from kernplan.errors import ConfigError
from kernplan.numcore import RngStream


class TestLayout:
    def test_sixteen_spaces(self):
        rects = parking.space_rects()
        assert rects.shape == (16, 4)
        # 3 x 6 m each, inside the lot
        np.testing.assert_allclose(rects[:, 2] - rects[:, 0], 3.0)
        np.testing.assert_allclose(rects[:, 3] - rects[:, 1], 6.0)
        assert rects.min() >= 0.5 and rects.max() <= 31.5

    def test_goal_heading_by_row(self):
        assert parking.space_heading(0) == pytest.approx(-np.pi / 2)
        assert parking.space_heading(8) == pytest.approx(np.pi / 2)

    def test_goal_pose_centered(self, bicycle):
        sc = parking.build_scene(3, None, bicycle)
        r = parking.space_rects()[3]
        assert sc.goal_pose[0] == pytest.approx((r[0] + r[2]) / 2)
        assert sc.goal_pose[1] == pytest.approx((r[1] + r[3]) / 2)
        assert sc.goal_pose[2] == pytest.approx(-np.pi / 2)

    def test_default_occupancy_excludes_goal(self, bicycle):
        sc = parking.build_scene(5, None, bicycle)
        assert 5 not in sc.occupied
        assert len(sc.occupied) == 15

    def test_occupied_goal_rejected(self, bicycle):
        with pytest.raises(ConfigError):
            parking.build_scene(2, [2, 3], bicycle)
        with pytest.raises(ConfigError):
            parking.build_scene(99, None, bicycle)

    def test_scene_json_roundtrip(self, bicycle):
        sc = parking.build_scene(7, [1, 2], bicycle)
        sc2 = parking.ParkingScene.from_json(sc.to_json(), bicycle)
        assert sc2.goal_space_index == 7
        assert sc2.occupied == (1, 2)
        np.testing.assert_allclose(sc2.goal_pose, sc.goal_pose)
        np.testing.assert_allclose(sc2.obstacles, sc.obstacles)


class TestSafety:
    def test_aisle_state_safe(self, bicycle, scene):
        assert parking.is_safe([16.0, 16.0, 0.0], scene, bicycle)

    def test_wall_overlap_unsafe(self, bicycle, scene):
        assert not parking.is_safe([0.5, 16.0, 0.0], scene, bicycle)
        assert not parking.is_safe([16.0, 31.8, 0.0], scene, bicycle)

    def test_occupied_space_unsafe(self, bicycle, scene):
        rects = parking.space_rects()
        occ = scene.occupied[0]
        cx = (rects[occ, 0] + rects[occ, 2]) / 2
        cy = (rects[occ, 1] + rects[occ, 3]) / 2
        assert not parking.is_safe([cx, cy, 0.0], scene, bicycle)

    def test_goal_space_safe(self, bicycle, scene):
        assert parking.is_safe(scene.goal_pose, scene, bicycle)

    def test_margin_inflation(self, bicycle, scene):
        # a pose that grazes an obstacle flips unsafe once the margin grows
        x = [16.0, 16.0, 0.0]
        assert parking.is_safe(x, scene, bicycle, margin=0.1)
        assert not parking.is_safe(x, scene, bicycle, margin=20.0)

    def test_heading_matters(self, bicycle, scene):
        # near a wall, body orientation decides the overlap
        x, y = 16.0, 2.3
        along = parking.is_safe([x, y, 0.0], scene, bicycle)
        across = parking.is_safe([x, y, np.pi / 2], scene, bicycle)
        assert along != across or (along and across)  # at least computes both
        # a state clearly inside the bottom wall is unsafe at any heading
        assert not parking.is_safe([16.0, 0.4, 0.0], scene, bicycle)

    def test_hitch_limit(self, scene):
        tt = dyn.make_system("tt2d")
        sc = parking.build_scene(3, (), tt)
        assert parking.is_safe([16.0, 16.0, 0.0, 0.0], sc, tt)
        assert not parking.is_safe([16.0, 16.0, 0.0, 1.5], sc, tt)

    def test_acctt2d_velocity_band(self):
        s = dyn.make_system("acctt2d")
        sc = parking.build_scene(3, (), s)
        ok = [16.0, 16.0, 0.0, 0.0, s.vel_limit - 0.1, s.accel_limit - 0.1]
        fast = [16.0, 16.0, 0.0, 0.0, s.vel_limit + 0.2, 0.0]
        hard = [16.0, 16.0, 0.0, 0.0, 0.0, s.accel_limit + 0.5]
        assert parking.is_safe(ok, sc, s)
        assert not parking.is_safe(fast, sc, s)
        assert not parking.is_safe(hard, sc, s)

    def test_safe_mask_vectorized(self, bicycle, scene):
        states = np.array([[16.0, 16.0, 0.0], [0.5, 16.0, 0.0],
                           [16.0, 16.0, 1.0]])
        mask = parking.safe_mask(states, scene, bicycle)
        assert mask.tolist() == [True, False, True]


class TestReward:
    def test_goal_progress_oracle(self, bicycle, scene):
        g = scene.goal_pose
        # exactly at the goal: progress 1
        assert parking.goal_progress(g[None], g)[0] == pytest.approx(1.0)
        # 4 m away, aligned: exp(-1)
        off = g.copy()
        off[0] += 4.0
        assert parking.goal_progress(off[None], g)[0] == pytest.approx(np.exp(-1))
        # aligned position, 1 rad heading error: exp(-1)
        rot = g.copy()
        rot[2] = dyn.wrap_angle(rot[2] + 1.0)
        assert parking.goal_progress(rot[None], g)[0] == pytest.approx(np.exp(-1))

    def test_perfect_trajectory_max_reward(self, bicycle, scene):
        traj = np.tile(scene.goal_pose, (51, 1))
        assert parking.reward(traj, scene) == pytest.approx(6.0)

    def test_reward_positive_and_bounded(self, bicycle, scene):
        rng = RngStream(0).child("rwd").generator()
        trajs = np.zeros((8, 51, 3))
        trajs[..., 0] = rng.uniform(1, 31, (8, 51))
        trajs[..., 1] = rng.uniform(1, 31, (8, 51))
        trajs[..., 2] = rng.uniform(-np.pi, np.pi, (8, 51))
        r = parking.reward_batch(trajs, scene)
        assert np.all(r > 0) and np.all(r <= 6.0)

    def test_terminal_weighting(self, bicycle, scene):
        # ending at the goal beats starting at it and drifting away
        g = scene.goal_pose
        far = g.copy()
        far[0] += 8.0
        arrive = np.vstack([np.tile(far, (26, 1)), np.tile(g, (25, 1))])
        leave = np.vstack([np.tile(g, (26, 1)), np.tile(far, (25, 1))])
        assert parking.reward(arrive, scene) > parking.reward(leave, scene)

    def test_row0_excluded_from_running_term(self, bicycle, scene):
        # changing only row 0 leaves the reward unchanged
        a = np.tile(scene.goal_pose, (51, 1))
        b = a.copy()
        b[0, 0] += 10.0
        assert parking.reward(a, scene) == pytest.approx(parking.reward(b, scene))

    def test_batch_matches_single(self, bicycle, scene):
        rng = RngStream(1).child("batch").generator()
        trajs = np.zeros((5, 51, 3))
        trajs[..., :2] = rng.uniform(2, 30, (5, 51, 2))
        batch = parking.reward_batch(trajs, scene)
        singles = [parking.reward(t, scene) for t in trajs]
        np.testing.assert_allclose(batch, singles)


class TestSampling:
    def test_samples_safe_and_deterministic(self, bicycle, scene):
        a = parking.sample_initial_state(scene, bicycle, RngStream(4).child("s"))
        b = parking.sample_initial_state(scene, bicycle, RngStream(4).child("s"))
        np.testing.assert_array_equal(a, b)
        assert parking.is_safe(a, scene, bicycle)

    def test_velocity_zero_trailers_aligned(self):
        s = dyn.make_system("acctt2d")
        sc = parking.build_scene(3, None, s)
        x = parking.sample_initial_state(sc, s, RngStream(9).child("s"))
        assert x[4] == 0.0 and x[5] == 0.0
        assert x[3] == pytest.approx(x[2])

    def test_avoids_all_spaces(self, bicycle, scene):
        # sampled starts never sit inside any space rectangle, even free ones
        rects = parking.space_rects()
        for seed in range(20):
            x = parking.sample_initial_state(scene, bicycle,
                                             RngStream(seed).child("sp"))
            inside = ((rects[:, 0] <= x[0]) & (x[0] <= rects[:, 2]) &
                      (rects[:, 1] <= x[1]) & (x[1] <= rects[:, 3]))
            assert not inside.any()

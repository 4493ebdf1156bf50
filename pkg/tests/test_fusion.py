"""Consistency filtering and depth-map fusion.

Photometric scoring is pinned on constructed probability volumes; the
geometric round trip and the full fusion path run on rendered scenes whose
true depths are exact, so pass/fail behavior is unambiguous.
"""

import numpy as np
import pytest

from binsweep import (
    SearchResult,
    depth_to_points,
    fuse_depth_maps,
    make_scene,
    photometric_consistency,
    relative_pose,
)
from binsweep.fusion import reprojection_check


@pytest.fixture(scope="module")
def scene():
    return make_scene("plane", seed=6, size=(32, 40), margin=8)


def exact_results(scene, confidence=1.0):
    results = []
    for gt in scene.gt_depths:
        results.append(SearchResult(
            depth=gt.copy(),
            confidence=np.full(gt.shape, confidence),
            final_prob=np.ones(gt.shape)))
    return results


class TestPhotometricConsistency:
    def test_confident_stages_score_one(self):
        probs = np.zeros((4, 3, 3))
        probs[1] = 1.0
        got = photometric_consistency([probs, probs.copy()], k_prime=2)
        np.testing.assert_allclose(got, 1.0, atol=0)

    def test_uniform_stages_score_inverse_bin_count(self):
        probs = np.full((4, 3, 3), 0.25)
        got = photometric_consistency([probs], k_prime=1)
        np.testing.assert_allclose(got, 0.25, atol=0)

    def test_average_of_half_and_full_confidence(self):
        half = np.full((2, 3, 3), 0.5)
        sure = np.zeros((2, 3, 3))
        sure[0] = 1.0
        got = photometric_consistency([half, sure], k_prime=2)
        np.testing.assert_allclose(got, 0.75, atol=0)

    def test_later_stages_excluded_by_k_prime(self):
        half = np.full((2, 3, 3), 0.5)
        sure = np.zeros((2, 3, 3))
        sure[0] = 1.0
        got = photometric_consistency([sure, half], k_prime=1)
        np.testing.assert_allclose(got, 1.0, atol=0)

    def test_coarse_stages_upsample_to_finest(self):
        coarse = np.zeros((2, 2, 3))
        coarse[0, 0, :] = 1.0
        coarse[1, 0, :] = 0.0
        coarse[0, 1, :] = 0.5
        coarse[1, 1, :] = 0.5
        fine = np.full((2, 4, 6), 0.5)
        got = photometric_consistency([coarse, fine], k_prime=2)
        assert got.shape == (4, 6)
        np.testing.assert_allclose(got[:2], 0.75, atol=0)
        np.testing.assert_allclose(got[2:], 0.5, atol=0)

    def test_bad_k_prime_rejected(self):
        probs = np.full((2, 3, 3), 0.5)
        with pytest.raises(ValueError):
            photometric_consistency([probs], k_prime=0)
        with pytest.raises(ValueError):
            photometric_consistency([probs], k_prime=2)

    def test_non_integer_scale_rejected(self):
        with pytest.raises(ValueError):
            photometric_consistency([np.full((2, 3, 3), 0.5),
                                     np.full((2, 4, 6), 0.5)], k_prime=2)


class TestReprojectionCheck:
    def test_exact_depths_pass_everywhere(self, scene):
        ref = scene.ref_index
        for i in range(len(scene.cameras)):
            if i == ref:
                continue
            pose = relative_pose(scene.rotations[ref], scene.translations[ref],
                                 scene.rotations[i], scene.translations[i])
            consistent, depth_back = reprojection_check(
                scene.gt_depths[ref], scene.cameras[ref], scene.gt_depths[i],
                scene.cameras[i], pose)
            assert consistent.all()
            np.testing.assert_allclose(depth_back[consistent],
                                       scene.gt_depths[ref][consistent],
                                       rtol=1e-6)

    def test_inflated_source_depth_fails_relative_gate(self, scene):
        ref = scene.ref_index
        src = [i for i in range(len(scene.cameras)) if i != ref][0]
        pose = relative_pose(scene.rotations[ref], scene.translations[ref],
                             scene.rotations[src], scene.translations[src])
        consistent, _ = reprojection_check(
            scene.gt_depths[ref], scene.cameras[ref],
            scene.gt_depths[src] * 1.1, scene.cameras[src], pose)
        assert not consistent.any()

    def test_gates_can_be_widened(self, scene):
        ref = scene.ref_index
        src = [i for i in range(len(scene.cameras)) if i != ref][0]
        pose = relative_pose(scene.rotations[ref], scene.translations[ref],
                             scene.rotations[src], scene.translations[src])
        consistent, _ = reprojection_check(
            scene.gt_depths[ref], scene.cameras[ref],
            scene.gt_depths[src] * 1.02, scene.cameras[src], pose,
            tau_px=50.0, tau_rel=0.5)
        assert consistent.all()


class TestFuseDepthMaps:
    def test_exact_inputs_fuse_to_ground_truth(self, scene):
        fused = fuse_depth_maps(scene, exact_results(scene))
        assert len(fused) == len(scene.images)
        for view, gt in zip(fused, scene.gt_depths):
            assert view.mask.all()
            assert (view.votes[view.mask] >= 2).all()
            np.testing.assert_allclose(view.depth[view.mask], gt[view.mask],
                                       rtol=1e-9)

    def test_photometric_gate_filters_everything_when_raised(self, scene):
        results = exact_results(scene, confidence=0.3)
        fused = fuse_depth_maps(scene, results, tau_ph=0.4)
        for view in fused:
            assert not view.mask.any()
            assert not view.photometric.any()

    def test_vote_requirement_above_available_views_empties_mask(self, scene):
        fused = fuse_depth_maps(scene, exact_results(scene),
                                min_consistent=len(scene.images))
        for view in fused:
            assert not view.mask.any()

    def test_one_corrupt_view_removes_its_vote(self, scene):
        results = exact_results(scene)
        ref = scene.ref_index
        bad = [i for i in range(len(scene.images)) if i != ref][0]
        results[bad].depth *= 1.1
        fused = fuse_depth_maps(scene, results, min_consistent=2)
        assert not fused[ref].mask.any()
        relaxed = fuse_depth_maps(scene, results, min_consistent=1)
        assert relaxed[ref].mask.all()
        np.testing.assert_allclose(relaxed[ref].depth[relaxed[ref].mask],
                                   scene.gt_depths[ref][relaxed[ref].mask],
                                   rtol=1e-9)


class TestDepthToPoints:
    def test_plane_lifts_to_constant_world_depth(self, scene):
        for i in range(len(scene.images)):
            points, _ = depth_to_points(scene.gt_depths[i], scene.cameras[i],
                                        scene.rotations[i],
                                        scene.translations[i])
            np.testing.assert_allclose(points[:, 2], 100.0, atol=1e-9)

    def test_mask_selects_points_and_gray_follows(self, scene):
        i = scene.ref_index
        gt = scene.gt_depths[i]
        mask = np.zeros(gt.shape, dtype=bool)
        mask[4:8, 5:9] = True
        image = scene.core_image(i)
        points, gray = depth_to_points(gt, scene.cameras[i],
                                       scene.rotations[i],
                                       scene.translations[i], mask=mask,
                                       image=image)
        assert points.shape == (16, 3)
        np.testing.assert_array_equal(gray, image[mask])

    def test_views_lift_to_the_same_surface(self, scene):
        """Points lifted from different cameras of the same scene land on
        one world plane."""
        clouds = [depth_to_points(scene.gt_depths[i], scene.cameras[i],
                                  scene.rotations[i],
                                  scene.translations[i])[0]
                  for i in range(len(scene.images))]
        for cloud in clouds:
            np.testing.assert_allclose(cloud[:, 2], clouds[0][0, 2],
                                       atol=1e-9)

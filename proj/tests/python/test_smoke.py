import numpy as np
import pytest

import icgmvs


def test_homography_identity():
    cam = icgmvs.Camera()
    cam.K = icgmvs.default_intrinsics(64, 80)
    H = icgmvs.homography(cam, cam, 3.0)
    assert np.allclose(H, np.eye(3), atol=1e-12)


def test_hypotheses_are_uniform():
    h = icgmvs.initial_hypotheses(2.0, 6.0, 8)
    assert h.shape == (8,)
    assert h[0] == pytest.approx(2.0)
    assert h[-1] == pytest.approx(6.0)
    assert np.allclose(np.diff(h), 4.0 / 7.0)


def test_scene_and_depth_errors():
    scene = icgmvs.make_scene(index=0, views=3, height=32, width=40, seed=3)
    assert len(scene.views) == 3
    v = scene.views[0]
    assert v.image.shape == (3, 32, 40)
    assert v.depth.shape == (32, 40)
    r = icgmvs.depth_errors(v.depth, v.depth)
    assert r["ade"] == 0.0
    assert r["valid_count"] > 0


def test_fusion_of_gt_depths_lies_on_the_scene():
    scene = icgmvs.make_scene(index=0, views=3, height=32, width=40, seed=3)
    pts = icgmvs.fuse_depths([v.depth for v in scene.views], [v.cam for v in scene.views], 1)
    assert pts.ndim == 2 and pts.shape[1] == 3 and len(pts) > 0
    m = icgmvs.cloud_metrics(pts, pts, 20.0, 0.01)
    assert m["overall"] == 0.0
    assert m["fscore"] == pytest.approx(100.0)


def test_pfm_round_trip(tmp_path):
    d = np.arange(12, dtype=np.float64).reshape(3, 4) / 4.0
    path = str(tmp_path / "d.pfm")
    icgmvs.write_pfm(path, d)
    assert np.array_equal(icgmvs.read_pfm(path), d)


def test_network_inference_shapes():
    scene = icgmvs.make_scene(index=0, views=3, height=32, width=40, seed=3)
    net = icgmvs.Network(seed=1)
    assert net.parameter_count() > 0
    depth, conf = net.infer([v.image for v in scene.views], [v.cam for v in scene.views])
    assert depth.shape == (32, 40)
    assert np.all((conf >= 0) & (conf <= 1))


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        icgmvs.initial_hypotheses(5.0, 1.0, 8)
    with pytest.raises(OSError):
        icgmvs.read_pfm("/nonexistent/icgmvs.pfm")

import numpy as np
import pytest
from hypothesis import given, strategies as st

from triportrait.camera import (Camera, generate_rays, look_at, normalized_intrinsic,
                                read_camera, write_camera)
from triportrait.errors import FormatError, ParameterError


def test_on_axis_ray_points_forward():
    cam = Camera(np.eye(4), normalized_intrinsic())
    origins, dirs = generate_rays(cam, 1, 1)
    np.testing.assert_allclose(dirs[0, 0], [0.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_array_equal(origins[0, 0], [0.0, 0.0, 0.0])


def test_pixel_convention():
    # Column to the right of centre goes +x, row below centre goes +y.
    cam = Camera(np.eye(4), normalized_intrinsic(focal=1.0))
    _, dirs = generate_rays(cam, 4, 2)
    u, v = 3.5 / 4 - 0.5, 1.5 / 2 - 0.5
    expect = np.array([u, v, 1.0]) / np.linalg.norm([u, v, 1.0])
    np.testing.assert_allclose(dirs[1, 3], expect, atol=1e-15)


@given(st.floats(-180, 180), st.floats(-60, 60), st.floats(1.0, 5.0))
def test_look_at_is_rigid_and_aims_at_target(yaw, pitch, radius):
    a, b = np.radians(yaw), np.radians(pitch)
    eye = radius * np.array([np.sin(a) * np.cos(b), np.sin(b), np.cos(a) * np.cos(b)])
    cam = look_at(eye)
    rot = cam.rotation
    np.testing.assert_allclose(rot.T @ rot, np.eye(3), atol=1e-12)
    assert np.linalg.det(rot) > 0
    np.testing.assert_allclose(cam.forward, -eye / radius, atol=1e-12)
    _, dirs = generate_rays(cam, 9, 9)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(dirs[4, 4], cam.forward, atol=1e-12)


def test_image_up_is_world_up():
    cam = look_at((0.0, 0.0, 2.7))
    _, dirs = generate_rays(cam, 3, 3)
    assert dirs[0, 1, 1] > 0 > dirs[2, 1, 1]


def test_params_roundtrip():
    cam = look_at((1.0, 0.5, 2.0))
    assert Camera.from_params(cam.params) == cam
    assert cam.params.shape == (25,)
    with pytest.raises(ParameterError):
        Camera.from_params(np.zeros(24))


@pytest.mark.parametrize("mutate", [
    lambda e, k: e.__setitem__((0, 0), 2.0),
    lambda e, k: e.__setitem__((0, 0), -1.0),
    lambda e, k: e.__setitem__((3, 0), 1.0),
    lambda e, k: k.__setitem__((0, 0), 0.0),
    lambda e, k: k.__setitem__((1, 1), np.nan),
])
def test_invalid_cameras(mutate):
    ext, k = np.eye(4), normalized_intrinsic()
    mutate(ext, k)
    with pytest.raises(ParameterError):
        Camera(ext, k)


def test_degenerate_look_at():
    with pytest.raises(ParameterError):
        look_at((0, 0, 0))
    with pytest.raises(ParameterError):
        look_at((0, 2, 0))


def test_json_roundtrip(tmp_path):
    cam = look_at((0.3, -0.2, 2.5), focal=2.0)
    path = tmp_path / "c.json"
    write_camera(cam, path)
    assert read_camera(path) == cam
    path.write_text("{not json")
    with pytest.raises(FormatError):
        read_camera(path)
    path.write_text('{"extrinsic": [1, 2]}')
    with pytest.raises(ParameterError):
        read_camera(path)


def test_rays_reject_bad_size():
    with pytest.raises(ParameterError):
        generate_rays(look_at((0, 0, 2)), 0, 4)


@given(st.integers(0, 2**32))
def test_random_camera_against_projection_oracle(seed):
    rng = np.random.default_rng(seed)
    eye = rng.normal(size=3)
    eye = eye / np.linalg.norm(eye) * rng.uniform(1.5, 4.0)
    cam = look_at(eye, target=rng.uniform(-0.2, 0.2, 3), focal=rng.uniform(1.0, 5.0))
    w, h = 5, 3
    _, dirs = generate_rays(cam, w, h)
    K, R, c = cam.intrinsic, cam.rotation, cam.position
    for v in range(h):
        for u in range(w):
            d = dirs[v, u]
            # A world point along the ray must project back to the pixel centre.
            p_cam = R.T @ ((c + 2.0 * d) - c)
            proj = K @ p_cam
            assert abs(proj[0] / proj[2] - (u + 0.5) / w) < 1e-6
            assert abs(proj[1] / proj[2] - (v + 0.5) / h) < 1e-6

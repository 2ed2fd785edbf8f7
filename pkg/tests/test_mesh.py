import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frachdg.errors import ValidationError
from frachdg.mesh import (
    OUTSIDE,
    Domain,
    axis_ray_segments,
    build_mesh,
    locate_point,
    locate_points,
    ray_segment_arrays,
    write_mesh_dump,
)


def test_single_cell_counts():
    m = build_mesh(1, 1)
    assert m.n_triangles == 2 and len(m.vertices) == 4 and m.n_edges == 5
    assert len(m.boundary_edges) == 4 and len(m.interior_edges) == 1


def test_two_by_three_counts_and_euler():
    m = build_mesh(2, 3)
    V, E, T = len(m.vertices), m.n_edges, m.n_triangles
    assert (T, V, E) == (12, 12, 23)
    assert V - E + T == 1


def test_six_by_six_reports_cell_side():
    m = build_mesh(6, 6)
    assert m.h == pytest.approx(1 / 6, rel=1e-14)
    assert m.diameter == pytest.approx(math.sqrt(2) / 6, rel=1e-14)


def test_triangle_layout_within_cell():
    m = build_mesh(1, 1)
    # lower-right (v00, v10, v11) then upper-left (v00, v11, v01)
    np.testing.assert_allclose(m.vertices[m.triangles[0]], [[0, 0], [1, 0], [1, 1]])
    np.testing.assert_allclose(m.vertices[m.triangles[1]], [[0, 0], [1, 1], [0, 1]])


@given(st.integers(1, 7), st.integers(1, 7))
@settings(max_examples=25, deadline=None)
def test_area_and_euler_any_grid(nx, ny):
    dom = Domain(-1.0, 2.0, 0.5, 1.25)
    m = build_mesh(nx, ny, dom)
    assert m.area.sum() == pytest.approx(dom.area, rel=1e-12)
    assert len(m.vertices) - m.n_edges + m.n_triangles == 1
    assert np.all(m.area > 0)


def test_normals_point_from_first_to_second_triangle():
    m = build_mesh(3, 4)
    c = m.centroids
    for e, (t1, t2) in enumerate(m.edge_triangles):
        mid = m.vertices[m.edge_vertices[e]].mean(axis=0)
        n = m.edge_normal[e]
        assert np.linalg.norm(n) == pytest.approx(1.0)
        assert np.dot(mid - c[t1], n) > 0
        if t2 >= 0:
            assert t1 < t2
            assert np.dot(c[t2] - mid, n) > 0


def test_interior_edge_traces_share_endpoints():
    m = build_mesh(3, 3)
    for e in m.interior_edges:
        t1, t2 = m.edge_triangles[e]
        ends = set(m.edge_vertices[e].tolist())
        assert ends <= set(m.triangles[t1].tolist())
        assert ends <= set(m.triangles[t2].tolist())


def test_locate_centroid_of_first_triangle():
    m = build_mesh(3, 3)
    tri, bary = locate_point(m, m.centroids[0])
    assert tri == 0
    np.testing.assert_allclose(bary, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)


def test_locate_exterior_point():
    assert locate_point(build_mesh(2, 2), (-0.1, 0.5)) is OUTSIDE


def test_locate_on_shared_edge_picks_smaller_id():
    m = build_mesh(1, 1)
    tri, bary = locate_point(m, (0.5, 0.5))  # on the diagonal
    assert tri == 0
    assert sum(bary) == pytest.approx(1.0, abs=1e-12)
    m2 = build_mesh(2, 1)
    tri, _ = locate_point(m2, (0.5, 0.25))  # vertical line shared by cells 0 and 1
    assert tri == 0


def test_locate_random_points_in_every_triangle(rng):
    m = build_mesh(5, 4, Domain(0, 2, -1, 1))
    for t in range(m.n_triangles):
        r = rng.dirichlet(np.ones(3), size=100)
        r = 0.98 * r + 0.02 / 3  # keep away from the edges
        pts = r @ m.vertices[m.triangles[t]]
        tri, bary = locate_points(m, pts)
        assert np.all(tri == t)
        np.testing.assert_allclose(bary, r, atol=1e-12)
        assert np.all(bary >= 0) and np.allclose(bary.sum(axis=1), 1.0, atol=1e-12)


def test_ray_crossing_diagonal():
    segs = axis_ray_segments(build_mesh(1, 1), "x", 0.25, 1.0)
    assert [(s.triangle, s.lo, s.hi) for s in segs] == [(1, 0.0, pytest.approx(0.25)), (0, pytest.approx(0.25), 1.0)]


def test_zero_length_ray_is_empty():
    assert axis_ray_segments(build_mesh(3, 3), "x", 0.4, 0.0) == []


def test_vertical_ray_two_by_two():
    segs = axis_ray_segments(build_mesh(2, 2), "y", 0.6, 1.0)
    assert len(segs) == 4
    assert sum(s.hi - s.lo for s in segs) == pytest.approx(1.0, abs=1e-12)


def test_transverse_outside_rejected():
    with pytest.raises(ValidationError):
        axis_ray_segments(build_mesh(2, 2), "x", 1.5, 0.5)


def test_ray_on_mesh_line_is_nudged():
    segs = axis_ray_segments(build_mesh(2, 2), "x", 0.5, 1.0)
    assert sum(s.hi - s.lo for s in segs) == pytest.approx(1.0, abs=1e-12)
    assert all(s.transverse > 0.5 for s in segs)


def test_random_rays_tile_without_gaps(rng):
    m = build_mesh(5, 7, Domain(0, 1, 0, 2))
    for _ in range(10_000):
        axis = "x" if rng.random() < 0.5 else "y"
        if axis == "x":
            trans, end = rng.uniform(0, 2), rng.uniform(0, 1)
        else:
            trans, end = rng.uniform(0, 1), rng.uniform(0, 2)
        tri, lo, hi = ray_segment_arrays(m, axis, trans, end)
        if end == 0:
            continue
        assert lo[0] == 0.0 and hi[-1] == pytest.approx(end, abs=1e-12)
        assert np.all(hi > lo)
        np.testing.assert_allclose(lo[1:], hi[:-1], atol=1e-12)
        mid = 0.5 * (lo + hi)
        pts = np.column_stack([mid, np.full_like(mid, trans)] if axis == "x" else [np.full_like(mid, trans), mid])
        ref = m.to_reference(tri, pts)
        assert np.all(ref >= -1e-9) and np.all(ref.sum(axis=1) <= 1 + 1e-9)


def test_mesh_dump_lines(tmp_path):
    m = build_mesh(2, 3)
    path = tmp_path / "mesh.txt"
    write_mesh_dump(m, path)
    kinds = [line.split()[0] for line in path.read_text().splitlines()]
    assert kinds.count("v") == 12 and kinds.count("t") == 12 and kinds.count("e") == 23


def test_invalid_grid_sizes():
    with pytest.raises(ValidationError):
        build_mesh(0, 3)
    with pytest.raises(ValidationError):
        Domain(1.0, 0.0, 0.0, 1.0)

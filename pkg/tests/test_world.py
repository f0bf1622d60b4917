"""Coordinate projection, smoke field sampling and optical depth."""

import math

import pytest
from hypothesis import given, strategies as st

from pyrewatch.world import (
    CoordinateError,
    GeoFix,
    LocalPoint,
    SmokeField,
    geo_to_local,
    local_to_geo,
    optical_depth,
    smoke_density_at,
)


class TestGeoFix:
    def test_validates_ranges(self):
        with pytest.raises(CoordinateError):
            GeoFix(lat_e7=91 * 10**7, lon_e7=0)
        with pytest.raises(CoordinateError):
            GeoFix(lat_e7=0, lon_e7=-181 * 10**7)
        with pytest.raises(CoordinateError):
            GeoFix(lat_e7=0, lon_e7=0, alt_cm=-1)

    def test_from_degrees(self):
        fix = GeoFix.from_degrees(37.0, -122.0, alt_m=1.5)
        assert fix.lat_e7 == 370000000
        assert fix.lon_e7 == -1220000000
        assert fix.alt_cm == 150


class TestProjection:
    origin = GeoFix.from_degrees(37.0, -122.0)

    def test_origin_maps_to_zero(self):
        p = geo_to_local(self.origin, self.origin)
        assert p == LocalPoint(0.0, 0.0, 0.0)

    def test_small_longitude_offset(self):
        # independent desk value: 0.001 deg of longitude at 37 N
        fix = GeoFix.from_degrees(37.0, -121.999)
        p = geo_to_local(fix, self.origin)
        expected = math.radians(0.001) * 6_371_000 * math.cos(math.radians(37.0))
        assert p.x_m == pytest.approx(expected, abs=1e-9)
        assert p.x_m == pytest.approx(88.8, abs=0.2)
        assert p.y_m == 0.0

    def test_altitude_is_plain_unit_conversion(self):
        fix = GeoFix(self.origin.lat_e7, self.origin.lon_e7, alt_cm=150)
        assert geo_to_local(fix, self.origin).z_m == 1.5

    def test_rejects_distant_fix(self):
        far = GeoFix.from_degrees(38.5, -122.0)
        with pytest.raises(CoordinateError):
            geo_to_local(far, self.origin)

    @given(st.floats(-9000, 9000), st.floats(-9000, 9000),
           st.floats(0, 500))
    def test_roundtrip_within_one_cm(self, x, y, z):
        p = LocalPoint(x, y, z)
        back = geo_to_local(local_to_geo(p, self.origin), self.origin)
        assert back.horizontal_distance_to(p) < 0.01
        assert abs(back.z_m - p.z_m) <= 0.005 + 1e-12


class TestSmokeField:
    def test_rejects_negative_density(self):
        with pytest.raises(ValueError):
            SmokeField([[0.1, -0.1]], cell_m=1.0)

    def test_zero_field_reads_zero(self):
        fld = SmokeField.empty(4, 4, cell_m=1.0)
        assert smoke_density_at(fld, LocalPoint(2.0, 2.0)) == 0.0

    def test_uniform_field_reads_constant(self):
        fld = SmokeField.uniform(0.5, 4, 4, cell_m=1.0)
        for x, y in [(0.5, 0.5), (1.7, 2.3), (3.9, 0.1)]:
            assert smoke_density_at(fld, LocalPoint(x, y)) == pytest.approx(0.5)

    def test_bilinear_midpoint(self):
        # hand evaluation: midpoint of [[0,1],[0,1]] is 0.5
        fld = SmokeField([[0.0, 1.0], [0.0, 1.0]], cell_m=1.0)
        assert smoke_density_at(fld, LocalPoint(1.0, 1.0)) == pytest.approx(0.5)

    def test_exact_at_cell_centers(self):
        fld = SmokeField([[0.1, 0.7], [0.3, 0.9]], cell_m=2.0)
        assert smoke_density_at(fld, LocalPoint(1.0, 1.0)) == pytest.approx(0.1)
        assert smoke_density_at(fld, LocalPoint(3.0, 3.0)) == pytest.approx(0.9)

    def test_outside_extent_is_open_air(self):
        fld = SmokeField.uniform(2.0, 2, 2, cell_m=1.0)
        assert smoke_density_at(fld, LocalPoint(-0.1, 1.0)) == 0.0
        assert smoke_density_at(fld, LocalPoint(1.0, 2.1)) == 0.0

    @given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
    def test_bounded_by_surrounding_cells(self, x, y):
        fld = SmokeField([[0.0, 0.5, 0.1], [0.9, 0.2, 0.4], [0.3, 0.8, 0.6]],
                         cell_m=1.0)
        v = smoke_density_at(fld, LocalPoint(x, y))
        assert fld.grid.min() - 1e-12 <= v <= fld.grid.max() + 1e-12


class TestOpticalDepth:
    def test_degenerate_segment(self):
        fld = SmokeField.uniform(1.0, 2, 2, cell_m=1.0)
        p = LocalPoint(1.0, 1.0)
        assert optical_depth(fld, p, p) == 0.0

    def test_uniform_density_analytic(self):
        # analytic line integral: 0.2 / m over 10 m is 2.0
        fld = SmokeField.uniform(0.2, 20, 20, cell_m=1.0)
        a, b = LocalPoint(2.0, 10.0), LocalPoint(12.0, 10.0)
        assert optical_depth(fld, a, b) == pytest.approx(2.0, abs=0.05)

    def test_zero_field(self):
        fld = SmokeField.empty(4, 4, cell_m=1.0)
        assert optical_depth(fld, LocalPoint(0, 0), LocalPoint(3, 3)) == 0.0

    @given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
    def test_symmetric(self, ax, ay, bx, by):
        fld = SmokeField([[0.1, 0.9, 0.2], [0.5, 0.0, 0.7], [0.3, 0.6, 0.4]],
                         cell_m=4.0)
        a, b = LocalPoint(ax, ay), LocalPoint(bx, by)
        d1, d2 = optical_depth(fld, a, b), optical_depth(fld, b, a)
        assert d1 == pytest.approx(d2, rel=1e-9, abs=1e-12)

    def test_additive_over_concatenation(self):
        fld = SmokeField([[0.1, 0.9], [0.5, 0.3]], cell_m=2.0)
        a, m, b = LocalPoint(0.2, 0.2), LocalPoint(2.0, 2.0), LocalPoint(3.8, 3.8)
        whole = optical_depth(fld, a, b)
        split = optical_depth(fld, a, m) + optical_depth(fld, m, b)
        assert whole == pytest.approx(split, abs=fld.cell_m / 4 * fld.grid.max())

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geosignature.landuse import (
    ActivityLegend,
    GeometryError,
    class_area_weights,
    load_legend,
    load_parcels,
    parcels_to_geojson,
    polygon_area_km2,
)
from geosignature.landuse.parcels import DEFAULT_CLASS_NAMES

from conftest import square

K2 = 111.195**2


def ring(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]


def fc(*features):
    return json.dumps({"type": "FeatureCollection", "features": list(features)}).encode()


def feat(coords, code, fid=None, gtype="Polygon"):
    f = {"type": "Feature", "properties": {"landuse_code": code}, "geometry": {"type": gtype, "coordinates": coords}}
    if fid is not None:
        f["id"] = fid
    return f


class TestArea:
    def test_unit_square_at_equator(self):
        area = polygon_area_km2([ring(-0.5, -0.5, 0.5, 0.5)])
        assert area == pytest.approx(K2, rel=1e-12)
        assert area == pytest.approx(12364.3, abs=0.1)

    def test_off_centre_square_uses_centroid_latitude(self):
        # centroid latitude 0.5 degrees
        assert polygon_area_km2([ring(0, 0, 1, 1)]) == pytest.approx(K2 * math.cos(math.radians(0.5)), rel=1e-12)

    def test_sixty_degrees_is_half(self):
        assert polygon_area_km2([ring(-0.5, 59.5, 0.5, 60.5)]) == pytest.approx(0.5 * K2, rel=1e-12)

    def test_concentric_hole(self):
        outer = ring(0, 0, 2, 2)
        hole = ring(0.5, 0.5, 1.5, 1.5)
        assert polygon_area_km2([outer, hole]) == pytest.approx(0.75 * polygon_area_km2([outer]), rel=1e-12)

    def test_degenerate(self):
        with pytest.raises(GeometryError):
            polygon_area_km2([[[0, 0], [1, 1], [2, 2], [0, 0]]])

    @settings(max_examples=40)
    @given(st.integers(3, 9), st.integers(0, 10), st.booleans(), st.integers(0, 10**6))
    def test_rotation_and_reversal_invariant(self, n, shift, reverse, seed):
        r = np.random.default_rng(seed)
        ang = np.sort(r.uniform(0, 2 * np.pi, n))
        rad = r.uniform(0.5, 1.0, n)
        pts = np.c_[10 + 0.01 * rad * np.cos(ang), 45 + 0.01 * rad * np.sin(ang)]
        if len(np.unique(ang)) < 3:
            return
        base = polygon_area_km2([np.vstack([pts, pts[:1]])])
        pts2 = np.roll(pts, shift % n, axis=0)
        if reverse:
            pts2 = pts2[::-1]
        assert polygon_area_km2([np.vstack([pts2, pts2[:1]])]) == pytest.approx(base, rel=1e-9)


class TestLegend:
    def test_load(self, tmp_path):
        p = tmp_path / "legend.csv"
        p.write_text("landuse_code,activity_class\nR1,1\nS,9\n")
        leg = load_legend(p)
        assert leg.entries == {"R1": 1, "S": 9}

    def test_bad_class(self):
        with pytest.raises(ValueError):
            ActivityLegend({"X": 13})

    def test_fixed_names(self):
        for k, v in {1: "residential", 4: "educational", 6: "work", 8: "civic", 9: "shopping"}.items():
            assert DEFAULT_CLASS_NAMES[k] == v
        assert sorted(DEFAULT_CLASS_NAMES) == list(range(1, 13))


class TestLoadParcels:
    def test_single_square(self):
        parcels, rep = load_parcels(fc(feat([ring(0, 0, 1, 1)], "R1", "a")), ActivityLegend({"R1": 1}))
        assert len(parcels) == 1 and parcels[0].activity_class == 1 and parcels[0].parcel_id == "a"
        assert rep.loaded == 1

    def test_unmapped_code(self):
        parcels, rep = load_parcels(fc(feat([ring(0, 0, 1, 1)], "Z9")), ActivityLegend({"R1": 1}))
        assert parcels == [] and rep.unmapped == 1

    def test_hole_quarter(self):
        outer = ring(0, 0, 1, 1)
        hole = ring(0, 0, 0.5, 0.5)
        with_hole, _ = load_parcels(fc(feat([outer, hole], "R1")), ActivityLegend({"R1": 1}))
        # shoelace oracle in the projected frame; the exterior centroid latitude is 0.5
        c = math.cos(math.radians(0.5))

        def shoelace(r):
            x = np.array(r)[:, 0] * c
            y = np.array(r)[:, 1]
            return abs(0.5 * np.sum(x[:-1] * y[1:] - x[1:] * y[:-1])) * K2

        assert with_hole[0].area == pytest.approx(shoelace(outer) - shoelace(hole), rel=1e-12)
        assert with_hole[0].area == pytest.approx(0.75 * shoelace(outer), rel=1e-12)

    def test_invalid_geometry_skipped(self):
        unclosed = [[[0, 0], [1, 0], [1, 1], [0, 1]]]
        short = [[[0, 0], [1, 0], [0, 0]]]
        parcels, rep = load_parcels(
            fc(feat(unclosed, "R1"), feat(short, "R1"), feat([ring(0, 0, 1, 1)], "R1")), ActivityLegend({"R1": 1})
        )
        assert rep.invalid == 2 and len(parcels) == 1

    def test_multipolygon_parts(self):
        mp = [[ring(0, 0, 1, 1)], [ring(2, 0, 3, 1)]]
        parcels, _ = load_parcels(fc(feat(mp, "R1", "m", "MultiPolygon")), ActivityLegend({"R1": 1}))
        assert [p.parcel_id for p in parcels] == ["m#0", "m#1"]

    def test_geojson_round_trip(self, tmp_path):
        ps = [square("a", 0, 0, 1, cls=1, code="R1"), square("b", 1, 0, 1, cls=6, code="W")]
        path = tmp_path / "p.geojson"
        path.write_text(json.dumps(parcels_to_geojson(ps)))
        back, _ = load_parcels(path, ActivityLegend({"R1": 1, "W": 6}))
        assert [(p.parcel_id, p.activity_class, p.area) for p in back] == [(p.parcel_id, p.activity_class, p.area) for p in ps]

    def test_unreadable(self, tmp_path):
        with pytest.raises(OSError):
            load_parcels(tmp_path / "missing.geojson", ActivityLegend({}))


class TestClassWeights:
    def test_single(self):
        assert class_area_weights([square("a", 0, 0, 1)]) == {1: 1.0}

    def test_one_to_three(self):
        a = square("a", -0.5, -0.5, 1, cls=1)
        b = square("b", -1.5, -0.5, 3, 1, cls=6)
        w = class_area_weights([a, b])
        assert w[1] == pytest.approx(0.25, rel=1e-12) and w[6] == pytest.approx(0.75, rel=1e-12)

    def test_random_city_summation_oracle(self, rng):
        parcels = [
            square(f"p{i}", rng.uniform(0, 1), rng.uniform(40, 41), rng.uniform(0.001, 0.01), cls=int(rng.integers(1, 13)))
            for i in range(50)
        ]
        total = 0.0
        per = {}
        for p in parcels:
            total += p.area
            per[p.activity_class] = per.get(p.activity_class, 0.0) + p.area
        w = class_area_weights(parcels)
        assert set(w) == set(per)
        for c in per:
            assert w[c] == pytest.approx(per[c] / total, rel=1e-12)
        assert sum(w.values()) == pytest.approx(1.0, abs=1e-9)
        assert all(0 <= v <= 1 for v in w.values())

    def test_empty(self):
        with pytest.raises(ValueError):
            class_area_weights([])

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geosignature.join import join_events
from geosignature.keylocations import DbscanParams, key_locations_by_user
from geosignature.landuse import build_index, class_area_weights
from geosignature.metrics import hourly_signature
from geosignature.synth import SynthConfig, apportion, generate_city, generate_events, save_truth


def one_class(cls: int) -> tuple:
    mix = [0.0] * 12
    mix[cls - 1] = 1.0
    return tuple(mix)


class TestApportion:
    def test_exact_split(self):
        assert apportion([0.5, 0.5] + [0.0] * 10, 4) == [2, 2] + [0] * 10

    @settings(max_examples=100)
    @given(st.lists(st.floats(0.0, 1.0), min_size=12, max_size=12).filter(lambda v: sum(v) > 0.01), st.integers(1, 900))
    def test_largest_remainder_bounds(self, raw, total):
        mix = [v / sum(raw) for v in raw]
        counts = apportion(mix, total)
        assert sum(counts) == total
        for m, c in zip(mix, counts):
            # each count lies within one unit of its quota
            assert abs(c - m * total) < 1.0 + 1e-9


class TestCity:
    def test_all_residential(self):
        parcels, legend = generate_city(SynthConfig(grid=3, class_mix=one_class(1)))
        assert len(parcels) == 9 and {p.activity_class for p in parcels} == {1}
        assert legend.lookup("LU01") == 1

    def test_half_split(self):
        mix = [0.5, 0.5] + [0.0] * 10
        parcels, _ = generate_city(SynthConfig(grid=4, class_mix=tuple(mix)))
        assert Counter(p.activity_class for p in parcels) == {1: 8, 2: 8}

    def test_area_weights_track_mix(self):
        cfg = SynthConfig(grid=20)
        parcels, _ = generate_city(cfg)
        w = class_area_weights(parcels)
        for c in range(1, 13):
            # equal-area cells up to the cos(lat) variation across the grid
            assert abs(w.get(c, 0.0) - cfg.class_mix[c - 1]) <= 1.0 / cfg.grid**2 + 2e-3

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            generate_city(SynthConfig(grid=2))

    def test_ids_sorted_and_unique(self):
        parcels, _ = generate_city(SynthConfig(grid=5))
        ids = [p.parcel_id for p in parcels]
        assert ids == sorted(ids) and len(set(ids)) == 25

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(class_mix=(0.5,) * 12)
        with pytest.raises(ValueError):
            SynthConfig(noise_fraction=1.0)
        with pytest.raises(ValueError):
            SynthConfig(class_preference=(0.0,) + (1.0,) * 11)


class TestEvents:
    def test_byte_identical_and_executor_independent(self, tmp_path):
        cfg = SynthConfig(seed=3, n_users=40, events_per_user=20, noise_fraction=0.1)
        parcels, _ = generate_city(cfg)
        a = generate_events(cfg, parcels)
        with ThreadPoolExecutor(4) as ex:
            b = generate_events(cfg, parcels, executor=ex)
        assert a.events == b.events
        save_truth(tmp_path / "a.json", a, cfg)
        save_truth(tmp_path / "b.json", b, cfg)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        c = generate_events(SynthConfig(seed=4, n_users=40, events_per_user=20, noise_fraction=0.1), parcels)
        assert c.events != a.events

    def test_truth_consistency(self, tmp_path):
        cfg = SynthConfig(seed=1, n_users=30, events_per_user=25)
        parcels, _ = generate_city(cfg)
        corpus = generate_events(cfg, parcels)
        per_user = Counter(e.user_id for e in corpus.events)
        for uid, anchors in corpus.truth.items():
            assert 2 <= len(anchors) <= 5
            assert per_user[uid] == sum(a.n_events for a in anchors)
            assert all(a.n_events >= cfg.min_events_per_anchor for a in anchors)
            for i, a in enumerate(anchors):
                for b in anchors[i + 1:]:
                    assert np.hypot(a.lon - b.lon, a.lat - b.lat) >= 2 * cfg.eps
        save_truth(tmp_path / "t.json", corpus, cfg)
        doc = json.loads((tmp_path / "t.json").read_text())
        assert doc["config"]["seed"] == 1 and len(doc["users"]) == 30

    def test_events_stay_within_jitter_and_parcel(self):
        cfg = SynthConfig(seed=2, n_users=50, events_per_user=30)
        parcels, _ = generate_city(cfg)
        corpus = generate_events(cfg, parcels)
        index = build_index(parcels)
        joined = join_events(corpus.events, index)
        by_user = {}
        for e in joined:
            by_user.setdefault(e.user_id, []).append(e)
        for uid, evs in by_user.items():
            anchors = corpus.truth[uid]
            for e in evs:
                d = [np.hypot(e.lon - a.lon, e.lat - a.lat) for a in anchors]
                k = int(np.argmin(d))
                assert d[k] <= cfg.eps / 3 + 1e-7
                assert e.distance_km == 0.0 and e.parcel_id == anchors[k].parcel_id

    def test_recovery_of_planted_key_locations(self):
        cfg = SynthConfig(seed=9, n_users=200, events_per_user=30)
        parcels, _ = generate_city(cfg)
        corpus = generate_events(cfg, parcels)
        joined = join_events(corpus.events, build_index(parcels))
        kls = key_locations_by_user(joined, DbscanParams(eps=cfg.eps, min_pts=3))
        got = Counter(k.user_id for k in kls)
        assert got == {u: len(a) for u, a in corpus.truth.items()}
        truth_classes = sorted(a.activity_class for anchors in corpus.truth.values() for a in anchors)
        assert sorted(k.dominant_class for k in kls) == truth_classes

    def test_hour_profile_recovered(self):
        cfg = SynthConfig(seed=5, grid=10, class_mix=one_class(6), n_users=2100, events_per_user=50)
        parcels, _ = generate_city(cfg)
        corpus = generate_events(cfg, parcels)
        assert len(corpus.events) >= 10**5
        joined = join_events(corpus.events, build_index(parcels))
        sig = hourly_signature(joined, 6, tz_offset_hours=cfg.tz_offset_hours)
        assert np.abs(sig.values - cfg.profiles()[5]).sum() < 0.05

    def test_all_events_on_local_weekdays(self):
        cfg = SynthConfig(seed=6, n_users=20, events_per_user=40)
        parcels, _ = generate_city(cfg)
        corpus = generate_events(cfg, parcels)
        local_days = np.array([(e.timestamp + cfg.tz_offset_hours * 3600) // 86400 for e in corpus.events])
        assert np.all((local_days + 3) % 7 < 5)

    def test_preference_shifts_anchor_classes(self):
        base = SynthConfig(seed=7, n_users=400, events_per_user=10)
        pref = SynthConfig(seed=7, n_users=400, events_per_user=10, class_preference=(0.25,) + (1.0,) * 11)
        parcels, _ = generate_city(base)

        def residential_share(cfg):
            anchors = [a for v in generate_events(cfg, parcels).truth.values() for a in v]
            return sum(a.activity_class == 1 for a in anchors) / len(anchors)

        assert residential_share(pref) < residential_share(base) - 0.15

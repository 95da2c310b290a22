import math
from datetime import date, datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patrolplan.features import (
    FeatureSet, build_features, entropy_bits, feature_names, historical_density, importance, mobility_features,
    poi_features, rolling_density, undersample, visitor_homogeneity,
)
from patrolplan.ingest import CheckinRecord, CrimeRecord, PoiRecord, Scenario, SyntheticParams, build_grid, \
    generate_synthetic

import oracles


def _counts(crimes, n_days=40, n_nodes=3):
    c = np.zeros((n_days, 12, n_nodes), dtype=int)
    for d, s, k in crimes:
        c[d, s, k] += 1
    return c


def test_historical_density_examples():
    one_per_day = [(d, 4, 1) for d in range(30)]
    assert historical_density(_counts(one_per_day), 1, 4, 30, 30) == 1.0
    assert historical_density(_counts([]), 1, 4, 30, 30) == 0.0
    two_per_day = [(d, 4, 1) for d in range(23, 30) for _ in range(2)]
    assert historical_density(_counts(two_per_day), 1, 4, 30, 7) == 2.0


def test_historical_density_excludes_current_day_and_other_slots():
    c = _counts([(30, 4, 1), (29, 5, 1), (29, 4, 0)])
    assert historical_density(c, 1, 4, 30, 7) == 0.0
    with pytest.raises(ValueError):
        historical_density(c, 1, 4, 30, 14)


def test_rolling_density_matches_pointwise():
    rng = np.random.default_rng(0)
    c = rng.poisson(0.3, size=(35, 12, 3))
    for w in (7, 30):
        r = rolling_density(c, w)
        for d in (0, 3, 7, 20, 34):
            for s in (0, 6):
                for k in range(3):
                    assert r[d, s, k] == pytest.approx(historical_density(c, k, s, d, w), abs=1e-12)


def test_importance_uses_three_previous_days():
    c = _counts([(7, 2, 0), (8, 2, 0), (9, 2, 0), (9, 2, 2), (10, 2, 0), (6, 2, 0)])
    assert importance(c, 10, 2).tolist() == [1.0, 0.0, 1 / 3]


def test_poi_examples():
    cats = ["Food", "Shop", "Arts"]
    dist, dens, div = poi_features(["Food"] * 4, cats, 1.0)
    assert list(dist) == [1, 0, 0] and div == 0.0
    assert poi_features(["Food", "Shop"], cats, 1.0)[2] == 1.0
    assert poi_features(["Arts"] * 10, cats, 1.0)[1] == 10.0
    dist, dens, div = poi_features([], cats, 1.0)
    assert list(dist) == [0, 0, 0] and dens == 0.0 and div == 0.0


def test_mobility_examples():
    d1, *_ = mobility_features([("a", "v1"), ("b", "v1")], 2, set())
    assert d1 == 1.0
    d1, d2, d3, d4, u, ch = mobility_features([("a", "v1")] * 5, 10, {"a"})
    assert (d1, d2, d3, d4, u, ch) == (0.0, 1.0, 0.5, 0.0, 1, 5)
    assert mobility_features([("a", "v"), ("b", "w")], 4, set())[3] == 1.0
    assert mobility_features([], 4, set()) == (0.0, 0.0, 0.0, 0.0, 0, 0)


def test_homogeneity_orthogonal_and_identical_users():
    assert visitor_homogeneity({"a": {"v": 1}, "b": {"w": 2}}) == 0.0
    assert visitor_homogeneity({"a": {"v": 1, "w": 1}, "b": {"v": 3, "w": 3}}) == pytest.approx(1.0)
    assert visitor_homogeneity({}) == 0.0


checkin_lists = st.lists(st.tuples(st.integers(0, 19), st.integers(0, 5)), min_size=1, max_size=40)


@given(checkin_lists)
def test_entropy_bounds(chk):
    users = {u for u, _ in chk}
    d1, d2, *_ = mobility_features(chk, len(chk), set())
    assert -1e-12 <= d1 <= math.log2(len(users)) + 1e-12
    assert -1e-12 <= d2 <= 1 + 1e-12
    per_user = [sum(1 for x, _ in chk if x == u) for u in users]
    if len(set(per_user)) == 1:
        assert d1 == pytest.approx(math.log2(len(users)), abs=1e-12)
    elif len(users) > 1:
        assert d1 < math.log2(len(users)) - 1e-12


@given(checkin_lists)
def test_homogeneity_equals_double_loop(chk):
    assert mobility_features(chk, len(chk), set())[1] == pytest.approx(oracles.homogeneity(chk), abs=1e-12)


@given(st.lists(st.sampled_from("abcde"), max_size=30))
def test_poi_distribution_sums_to_one(cats_in_node):
    dist, _, div = poi_features(cats_in_node, list("abcde"), 0.5)
    if cats_in_node:
        assert dist.sum() == pytest.approx(1.0, abs=1e-9)
        assert 0 <= div <= math.log2(5) + 1e-12
    else:
        assert dist.sum() == 0


def _tiny_scenario(seed):
    rng = np.random.default_rng(seed)
    g = build_grid((47.0, -122.0, 47.01, -121.97), 1, 3)

    def ts(m):
        return datetime(2013, 1, 1) + timedelta(minutes=int(m))

    pois = [PoiRecord(f"v{i}", 47.005, -122.0 + 0.01 * (i % 3) + 0.005, "ABC"[rng.integers(3)]) for i in range(6)]
    checkins = []
    for _ in range(rng.integers(5, 30)):
        v = pois[rng.integers(len(pois))]
        checkins.append(CheckinRecord(ts(rng.integers(0, 3 * 1440)), v.lat, v.lon, f"u{rng.integers(4)}", v.venue_id))
    crimes = [CrimeRecord(ts(rng.integers(0, 3 * 1440)), 47.005, -122.0 + 0.01 * rng.integers(3) + 0.005, "X")
              for _ in range(10)]
    return Scenario(g, date(2013, 1, 1), 3, crimes=sorted(crimes), checkins=sorted(checkins), pois=pois)


@pytest.mark.parametrize("seed", range(5))
def test_build_features_matches_reference(seed):
    sc = _tiny_scenario(seed)
    fs = build_features(sc)
    cats = sorted({p.category for p in sc.pois})
    assert fs.X.shape == (3 * 12 * 3, len(feature_names(cats)))
    nodes_ck = sc.node_of(sc.checkins)
    mins = sc.minutes_of(sc.checkins)
    crimes = [(int(t // 1440), int(t % 1440 // 120), int(k)) for t, k in zip(sc.minutes_of(sc.crimes),
                                                                              sc.node_of(sc.crimes))]
    for i in range(len(fs)):
        d, s, k = int(fs.day[i]), int(fs.slot[i]), int(fs.node[i])
        row = fs.X[i]
        assert row[0] == pytest.approx(oracles.density(crimes, k, s, d, 30), abs=1e-9)
        assert row[1] == pytest.approx(oracles.density(crimes, k, s, d, 7), abs=1e-9)
        in_node = [p.category for p, n in zip(sc.pois, sc.node_of(sc.pois)) if n == k]
        dist, dens, div = oracles.poi(in_node, cats, sc.grid.cell_area / 1e6)
        assert np.allclose(row[2:2 + len(cats)], dist, atol=1e-9)
        assert row[2 + len(cats)] == pytest.approx(dens, rel=1e-9)
        assert row[3 + len(cats)] == pytest.approx(div, abs=1e-9)
        here = [j for j in range(len(sc.checkins)) if int(mins[j] // 1440) == d and int(mins[j] % 1440 // 120) == s]
        chk = [(sc.checkins[j].user_id, sc.checkins[j].venue_id) for j in here if nodes_ck[j] == k]
        seen = {sc.checkins[j].user_id for j in range(len(sc.checkins)) if nodes_ck[j] == k and mins[j] < (d * 12 + s) * 120}
        ref = oracles.mobility(chk, len(here), seen)
        assert np.allclose(row[-6:], ref, atol=1e-9)
        assert fs.y[i] == ((d, s, k) in crimes)


def test_region_popularity_sums_to_one_per_slot():
    sc = generate_synthetic(SyntheticParams(n_days=2), 1)
    fs = build_features(sc)
    d3 = fs.X[:, fs.names.index("region_popularity")]
    for d in range(2):
        for s in range(12):
            m = (fs.day == d) & (fs.slot == s)
            total = d3[m].sum()
            assert total == 0 or total == pytest.approx(1.0, abs=1e-9)


def test_feature_rows_and_csv(tmp_path):
    sc = _tiny_scenario(0)
    fs = build_features(sc, days=[2])
    r = fs.row(5)
    assert np.array_equal(r.vector(), fs.X[5])
    assert r.interval.day == 2
    fs.to_csv(tmp_path / "features.csv")
    lines = (tmp_path / "features.csv").read_text().splitlines()
    assert len(lines) == len(fs) + 1 and lines[0].endswith("label")


def _fs(labels):
    y = np.asarray(labels, dtype=bool)
    n = len(y)
    return FeatureSet(np.arange(n, dtype=float)[:, None], y, np.zeros(n, int), np.zeros(n, int), np.arange(n), ["x"])


def test_undersample_examples():
    fs = _fs([True] * 10 + [False] * 90)
    out = undersample(fs, 0)
    assert out.y.sum() == 10 and (~out.y).sum() == 10
    same = undersample(_fs([True] * 10 + [False] * 10), 0)
    assert np.array_equal(same.X, _fs([True] * 10 + [False] * 10).X)
    assert np.array_equal(undersample(fs, 3).X, undersample(fs, 3).X)
    with pytest.raises(ValueError):
        undersample(_fs([False] * 5), 0)


@given(st.integers(1, 30), st.integers(0, 60), st.integers(0, 2**32 - 1))
def test_undersample_exact_half(n_pos, extra, seed):
    fs = _fs([True] * n_pos + [False] * (n_pos + extra))
    out = undersample(fs, seed)
    assert out.y.sum() * 2 == len(out)
    assert set(np.flatnonzero(fs.y)) <= set(out.node.tolist())
    assert len(set(out.node.tolist())) == len(out)


def test_entropy_bits_basic():
    assert entropy_bits([1, 1, 1, 1]) == 2.0
    assert entropy_bits([0, 0]) == 0.0

from __future__ import annotations

import numpy as np
import pytest

from helpers import knn_brute_force

from f2a.dataset import WindowSample
from f2a.errors import DimensionError, FormatError
from f2a.forecaster import BuiltinForecaster, init_forecaster_params
from f2a.retrieval import RetrievalStore, build_store, load_store, query, save_store


def _store_from_embeddings(embs, h=2, c=1):
    embs = np.asarray(embs, dtype=float)
    n = embs.shape[0]
    d = embs.shape[1] // c
    horizons = np.arange(n * h * c, dtype=float).reshape(n, h, c)
    return RetrievalStore(
        embeddings=embs,
        horizons=horizons,
        names=tuple(f"r{i}" for i in range(n)),
        starts=np.arange(n, dtype=np.int64),
        c=c,
        d=d,
        h=h,
    )


def _random_store(rng, n, c=2, d=3, h=2):
    return _store_from_embeddings(rng.normal(size=(n, c * d)), h=h, c=c)


def test_query_self_match():
    store = _store_from_embeddings([[0.0, 0.0], [3.0, 4.0]])
    res = query(store, np.array([0.0, 0.0]), 1)
    assert res.indices.tolist() == [0]
    assert res.distances[0] == 0.0
    assert np.array_equal(res.horizons[0], store.horizons[0])


def test_query_order_and_distances():
    store = _store_from_embeddings([[0.0, 0.0], [3.0, 4.0]])
    res = query(store, np.array([0.0, 0.0]), 2)
    assert res.indices.tolist() == [0, 1]
    np.testing.assert_allclose(res.distances, [0.0, 5.0])


def test_query_tie_breaks_by_record_index():
    store = _store_from_embeddings([[1.0, 0.0], [-1.0, 0.0]])
    res = query(store, np.array([0.0, 0.0]), 2)
    assert res.indices.tolist() == [0, 1]
    assert res.distances[0] == res.distances[1] == 1.0


def test_query_k_validation():
    store = _store_from_embeddings([[0.0, 0.0]])
    with pytest.raises(ValueError):
        query(store, np.zeros(2), 0)
    with pytest.raises(ValueError):
        query(store, np.zeros(2), 2)
    with pytest.raises(DimensionError):
        query(store, np.zeros(3), 1)


def test_query_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(25):
        n = int(rng.integers(5, 300))
        store = _random_store(rng, n)
        q = rng.normal(size=store.embeddings.shape[1])
        for k in (1, 3, 5):
            if k > n:
                continue
            res = query(store, q, k)
            idx, dist = knn_brute_force(store.embeddings, q, k)
            assert res.indices.tolist() == idx
            np.testing.assert_allclose(res.distances, dist, atol=1e-12)


def test_query_monotone_in_k():
    rng = np.random.default_rng(1)
    store = _random_store(rng, 50)
    q = rng.normal(size=store.embeddings.shape[1])
    small = query(store, q, 4)
    big = query(store, q, 9)
    assert big.indices[:4].tolist() == small.indices.tolist()
    np.testing.assert_array_equal(big.distances[:4], small.distances)


def test_query_does_not_mutate_store():
    rng = np.random.default_rng(2)
    store = _random_store(rng, 30)
    before = store.embeddings.tobytes() + store.horizons.tobytes()
    query(store, rng.normal(size=store.embeddings.shape[1]), 7)
    assert store.embeddings.tobytes() + store.horizons.tobytes() == before


def _windows(rng, n, l_ctx=5, c=2, h=3):
    return [
        WindowSample(
            x=rng.normal(size=(l_ctx, c)),
            z=rng.normal(size=(h, c)),
            y=np.zeros(h, dtype=np.int64),
            origin=(f"ser{i % 2}", i),
        )
        for i in range(n)
    ]


def test_build_store_preserves_order_and_origins():
    rng = np.random.default_rng(3)
    wins = _windows(rng, 7)
    fc = BuiltinForecaster(init_forecaster_params(5, 4, 3, rng))
    store = build_store(wins, fc)
    assert len(store) == 7
    assert list(store.starts) == [w.origin[1] for w in wins]
    assert store.names == tuple(w.origin[0] for w in wins)
    for i, w in enumerate(wins):
        assert np.array_equal(store.horizons[i], w.z)


def test_build_store_empty_rejected():
    with pytest.raises(ValueError):
        build_store([], None)


def test_build_store_deterministic_bytes(tmp_path):
    rng = np.random.default_rng(4)
    wins = _windows(rng, 10)
    fc = BuiltinForecaster(init_forecaster_params(5, 4, 3, np.random.default_rng(5)))
    p1, p2 = tmp_path / "a.f2ar", tmp_path / "b.f2ar"
    save_store(build_store(wins, fc), p1)
    save_store(build_store(wins, fc), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_store_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    store = _random_store(rng, 100, c=3, d=2, h=4)
    path = tmp_path / "s.f2ar"
    save_store(store, path)
    back = load_store(path, expect_dims=(3, 2, 4))
    assert np.array_equal(back.embeddings, store.embeddings)
    assert np.array_equal(back.horizons, store.horizons)
    assert back.names == store.names
    assert np.array_equal(back.starts, store.starts)


def test_store_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_store(tmp_path / "missing.f2ar")

    rng = np.random.default_rng(7)
    store = _random_store(rng, 3)
    path = tmp_path / "s.f2ar"
    save_store(store, path)
    raw = bytearray(path.read_bytes())

    with pytest.raises(DimensionError, match="C=9"):
        load_store(path, expect_dims=(9, 3, 2))

    bad = tmp_path / "bad.f2ar"
    bad.write_bytes(b"NOPE" + bytes(raw[4:]))
    with pytest.raises(FormatError, match="magic"):
        load_store(bad)

    badv = tmp_path / "badv.f2ar"
    badv.write_bytes(bytes(raw[:4]) + (7).to_bytes(4, "little") + bytes(raw[8:]))
    with pytest.raises(FormatError, match="version"):
        load_store(badv)

    trunc = tmp_path / "trunc.f2ar"
    trunc.write_bytes(bytes(raw[:-3]))
    with pytest.raises(FormatError, match="truncated"):
        load_store(trunc)

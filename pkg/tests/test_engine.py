"""End-to-end lookup pipeline: exactness, schemes, metrics, callbacks."""

import numpy as np
import pytest

from hermit.datagen import WorkloadSpec, generate, generate_queries
from hermit.engine import (
    Engine,
    baseline_lookup,
    baseline_lookup_metrics,
    cm_lookup_metrics,
    hermit_lookup,
)
from hermit.ranges import ValueRange
from hermit.table import LOGICAL, PHYSICAL, Predicate, Table, scan_oracle
from hermit.trstree import TrsParams

from conftest import make_linear_table


def _hand_table(id_scheme=PHYSICAL):
    # 8 rows, b = 2c + 1 except slot 3 (price spike)
    t = Table([("a", "i64"), ("b", "f64"), ("c", "f64"), ("d", "f64")], 0, id_scheme)
    cs = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]
    for i, c in enumerate(cs):
        b = 2 * c + 1 if i != 3 else 999.0
        t.insert_tuple([i, b, c, float(i)])
    return t


def test_hand_table_matches_frozen_oracle():
    # exhaustive scan oracle on the 8-row table, frozen:
    #   c in [10, 30] -> slots {1, 2, 3, 4, 5}  (row 3 matches on c even
    #   though its b value is an outlier)
    for scheme in (PHYSICAL, LOGICAL):
        t = _hand_table(scheme)
        e = Engine(t)
        h = e.create_hermit_index("c", "b")
        pred = Predicate(2, ValueRange(10.0, 30.0))
        got = h.lookup(pred)
        assert got.tolist() == [1, 2, 3, 4, 5]
        assert got.tolist() == scan_oracle(t, pred).tolist()


def test_empty_intersection():
    t = _hand_table()
    e = Engine(t)
    h = e.create_hermit_index("c", "b")
    assert h.lookup(Predicate(2, ValueRange(500.0, 600.0))).size == 0


def test_scheme_invariance_of_results():
    specs = [Predicate(2, ValueRange(10.0, 30.0)), Predicate(2, ValueRange(5.0, 40.0))]
    results = {}
    for scheme in (PHYSICAL, LOGICAL):
        t = _hand_table(scheme)
        e = Engine(t)
        h = e.create_hermit_index("c", "b")
        results[scheme] = [h.lookup(p).tolist() for p in specs]
    assert results[PHYSICAL] == results[LOGICAL]


def test_create_index_rejects_same_column(linear_table):
    e = Engine(linear_table)
    with pytest.raises(ValueError):
        e.create_hermit_index("c", "c")


def test_host_index_shared():
    t = generate(WorkloadSpec("sensor", 2000, noise_pct=0.0, seed=1, sensors=4))
    e = Engine(t)
    idxs = [e.create_hermit_index(f"r{j}", "avg", seed=j) for j in range(4)]
    assert len({id(i.host) for i in idxs}) == 1
    assert len(e.hosts) == 1
    # all registered in the memory report
    sec = e.memory_report()["components"]["secondary"]
    assert sum(1 for k in sec if k.startswith("trs:")) == 4
    assert sum(1 for k in sec if k.startswith("host:")) == 1


def test_two_predicate_lookup():
    t = _hand_table()
    e = Engine(t)
    h = e.create_hermit_index("c", "b")
    pred = Predicate(2, ValueRange(10.0, 30.0))
    second = Predicate(3, ValueRange(2.0, 4.0))  # payload filter
    got = h.lookup(pred, second)
    assert got.tolist() == scan_oracle(t, pred, second).tolist() == [2, 3, 4]


def test_randomized_exactness_all_kinds():
    for scheme in (PHYSICAL, LOGICAL):
        spec = WorkloadSpec("sigmoid", 10_000, noise_pct=0.01, seed=2)
        t = generate(spec, id_scheme=scheme)
        e = Engine(t)
        h = e.create_hermit_index("c", "b")
        b = e.create_baseline_index("c")
        cm = e.create_cm_index("c", "b", 64.0, 64.0)
        host = e.cm_host(cm)
        preds = generate_queries(t, "c", 0.002, 30, seed=3)
        preds += generate_queries(t, "c", "point", 30, seed=4)
        for p in preds:
            want = scan_oracle(t, p).tolist()
            assert h.lookup(p).tolist() == want
            assert baseline_lookup(b, p, t).tolist() == want
            got, _ = cm_lookup_metrics(cm, p, host, t)
            assert got.tolist() == want


def test_metrics_no_candidates_ratio_zero():
    t = _hand_table()
    e = Engine(t)
    h = e.create_hermit_index("c", "b")
    _, m = h.lookup_metrics(Predicate(2, ValueRange(500.0, 600.0)))
    assert m.candidate_count == 0
    assert m.false_positive_ratio == 0.0


def test_metrics_perfect_model_zero_false_positives():
    t = make_linear_table(5000, slope=2.0, intercept=1.0)
    e = Engine(t)
    h = e.create_hermit_index("c", "b", params=TrsParams(error_bound=0.0))
    for p in generate_queries(t, "c", 0.01, 20, seed=5):
        slots, m = h.lookup_metrics(p)
        assert m.false_positive_ratio == 0.0
        assert slots.tolist() == scan_oracle(t, p).tolist()


def test_metrics_step_structure():
    for scheme, expect_primary in ((LOGICAL, True), (PHYSICAL, False)):
        t = make_linear_table(2000, id_scheme=scheme)
        e = Engine(t)
        h = e.create_hermit_index("c", "b")
        pred = generate_queries(t, "c", 0.05, 1, seed=6)[0]
        slots, m = h.lookup_metrics(pred)
        assert slots.size > 0
        assert set(m.steps) == {"trs_lookup", "host_index", "primary_index", "validation"}
        if expect_primary:
            assert m.steps["primary_index"] > 0.0
        else:
            assert m.steps["primary_index"] == 0.0
        fr = m.time_fractions()
        assert sum(fr.values()) == pytest.approx(1.0, abs=1e-6)


def test_metrics_counts_deterministic():
    t = generate(WorkloadSpec("sigmoid", 5000, noise_pct=0.01, seed=7))
    e = Engine(t)
    h = e.create_hermit_index("c", "b")
    pred = generate_queries(t, "c", 0.01, 1, seed=8)[0]
    a = h.lookup_metrics(pred)[1]
    b = h.lookup_metrics(pred)[1]
    assert (a.candidate_count, a.result_count) == (b.candidate_count, b.result_count)


def test_monotone_candidates_in_error_bound():
    # exact-line single-leaf trees: candidate count never decreases as the
    # band parameter grows, for a fixed predicate
    t = make_linear_table(20_000, seed=9)
    preds = generate_queries(t, "c", 0.001, 10, seed=10)
    prev = None
    for eb in (1.0, 2.0, 10.0, 100.0):
        e = Engine(t)
        h = e.create_hermit_index("c", "b", params=TrsParams(error_bound=eb))
        counts = [h.lookup_metrics(p)[1].candidate_count for p in preds]
        if prev is not None:
            assert all(c >= p for c, p in zip(counts, prev))
        prev = counts
        t._structures.clear()  # allow re-registration by the next engine


def test_engine_insert_delete_callbacks():
    for scheme in (PHYSICAL, LOGICAL):
        t = make_linear_table(500, id_scheme=scheme, seed=11)
        e = Engine(t)
        h = e.create_hermit_index("c", "b")
        b = e.create_baseline_index("c")
        tid = e.insert([10_000, 55.5, 27.75, 0.0])
        pred = Predicate(2, ValueRange(27.75, 27.75))
        want = scan_oracle(t, pred).tolist()
        assert h.lookup(pred).tolist() == want
        assert baseline_lookup(b, pred, t).tolist() == want
        assert len(want) == 1
        e.delete(10_000)
        assert h.lookup(pred).size == 0
        assert baseline_lookup(b, pred, t).size == 0


def test_engine_null_host_rows_still_found():
    # a row with a valid target but null host is unreachable through the
    # host index; the index must still return it
    t = Table([("a", "i64"), ("b", "f64"), ("c", "f64")], 0, PHYSICAL)
    for i in range(50):
        t.insert_tuple([i, 2.0 * i, float(i)])
    t.insert_tuple([50, None, 25.5])
    e = Engine(t)
    h = e.create_hermit_index("c", "b")
    pred = Predicate(2, ValueRange(25.0, 26.0))
    assert h.lookup(pred).tolist() == scan_oracle(t, pred).tolist()
    # and the same via the online path
    e.insert([51, None, 25.7])
    assert h.lookup(pred).tolist() == scan_oracle(t, pred).tolist()
    e.delete(51)
    assert h.lookup(pred).tolist() == scan_oracle(t, pred).tolist()


def test_mixed_ops_match_oracle():
    rng = np.random.default_rng(12)
    t = generate(WorkloadSpec("linear", 5000, noise_pct=0.01, seed=13))
    e = Engine(t)
    h = e.create_hermit_index("c", "b")
    b = e.create_baseline_index("c")
    live = list(range(5000))
    next_pk = 5000
    for i in range(10_000):
        r = rng.random()
        if r < 0.45:
            c = float(rng.uniform(0, 1_048_576))
            bv = float(rng.uniform(0, 2_000_000))
            e.insert([next_pk, bv, c, 0.0])
            live.append(next_pk)
            next_pk += 1
        elif r < 0.9 and live:
            e.delete(live.pop(int(rng.integers(len(live)))))
    for p in generate_queries(t, "c", 0.002, 100, seed=14):
        want = scan_oracle(t, p).tolist()
        assert h.lookup(p).tolist() == want
        assert baseline_lookup(b, p, t).tolist() == want

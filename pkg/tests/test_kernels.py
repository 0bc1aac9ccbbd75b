"""Backend parity between the compiled kernels and the numpy fallback."""

from time import perf_counter

import numpy as np
import pytest

from hermit import kernels


def _datasets():
    rng = np.random.default_rng(0)
    n = 5000
    ms = np.sort(rng.uniform(-1e5, 1e5, n))
    yield ms, 2.5 * ms - 7.0  # clean line
    yield ms, 2.5 * ms - 7.0 + rng.normal(0, 50.0, n)  # jittered
    yield ms, rng.uniform(-1e5, 1e5, n)  # uncorrelated
    yield np.full(100, 3.14), rng.uniform(0, 1, 100)  # degenerate
    yield np.empty(0), np.empty(0)


def test_backends_agree_on_fit():
    backends = kernels.available_backends()
    for ms, ns in _datasets():
        results = {
            name: impl.fit_line(np.ascontiguousarray(ms), np.ascontiguousarray(ns))
            for name, impl in backends.items()
        }
        ref = results["python"]
        for name, got in results.items():
            assert got[2] == ref[2], name
            assert got[0] == pytest.approx(ref[0], rel=1e-9, abs=1e-9)
            assert got[1] == pytest.approx(ref[1], rel=1e-9, abs=1e-6)


def test_backends_agree_on_scan_and_route():
    backends = kernels.available_backends()
    rng = np.random.default_rng(1)
    ms = np.sort(rng.uniform(0, 1000, 3000))
    ns = 2 * ms + rng.normal(0, 10, 3000)
    bounds = np.linspace(0, 1000, 9)[1:-1].copy()
    scans = {}
    routes = {}
    for name, impl in backends.items():
        accept = impl.scan_outliers(ms, ns, 2.0, 0.0, 15.0, float("inf"))
        scans[name] = accept.tolist()
        routes[name] = impl.route_values(ms, bounds).tolist()
        # rejection threshold honored identically
        assert impl.scan_outliers(ms, ns, 2.0, 0.0, 0.001, 5.0) is None
    ref_scan = scans["python"]
    ref_route = routes["python"]
    for name in backends:
        assert scans[name] == ref_scan
        assert routes[name] == ref_route


def test_route_boundary_goes_right():
    for impl in kernels.available_backends().values():
        idx = impl.route_values(
            np.array([0.0, 250.0, 500.0, 999.0]), np.array([250.0, 500.0, 750.0])
        )
        assert idx.tolist() == [0, 1, 2, 3]


def test_scan_limit_strictness():
    # exactly at the cap is accepted; one past it is rejected
    ms = np.arange(100.0)
    ns = np.zeros(100)
    ns[:10] = 50.0
    for impl in kernels.available_backends().values():
        ok = impl.scan_outliers(ms, ns, 0.0, 0.0, 1.0, 10.0)
        assert ok is not None and ok.size == 10
        ns2 = ns.copy()
        ns2[10] = 50.0
        assert impl.scan_outliers(ms, ns2, 0.0, 0.0, 1.0, 10.0) is None


def test_backend_benchmark_smoke(capsys):
    # compare both backends on a realistic buffer; informational only
    backends = kernels.available_backends()
    rng = np.random.default_rng(2)
    ms = np.sort(rng.uniform(0, 1e6, 100_000))
    ns = 1.5 * ms + rng.normal(0, 100, 100_000)
    report = {}
    for name, impl in backends.items():
        impl.fit_line(ms, ns)
        t0 = perf_counter()
        for _ in range(3):
            impl.fit_line(ms, ns)
        report[name] = (perf_counter() - t0) / 3
    line = ", ".join(f"{k}: {v * 1e6:.0f}us" for k, v in report.items())
    print(f"fit_line 100K pairs -> {line}")
    assert all(v > 0 for v in report.values())

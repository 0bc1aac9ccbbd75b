"""CLI subcommands, exit codes, and report schema."""

import json

import pytest

from hermit.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(scope="module")
def data_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "lin.csv"
    rc = main(
        [
            "generate",
            "--kind",
            "linear",
            "--rows",
            "4000",
            "--noise",
            "0.01",
            "--seed",
            "3",
            "--out",
            str(path),
        ]
    )
    assert rc == EXIT_OK
    return str(path)


def test_generate_and_build(data_file, tmp_path):
    out = tmp_path / "build.json"
    rc = main(
        [
            "build",
            "--data",
            data_file,
            "--index",
            "hermit",
            "--target",
            "c",
            "--host",
            "b",
            "--stats",
            "--json",
            str(out),
        ]
    )
    assert rc == EXIT_OK
    report = json.loads(out.read_text())
    assert report["schema_version"] == 1
    assert report["command"] == "build"
    assert report["results"]["rows"] == 4000
    assert report["results"]["memory"]["total"] > 0


@pytest.mark.parametrize("kind", ["hermit", "baseline", "cm"])
def test_bench_verify_all_kinds(data_file, tmp_path, kind):
    out = tmp_path / f"bench-{kind}.json"
    rc = main(
        [
            "bench",
            "--data",
            data_file,
            "--index",
            kind,
            "--target",
            "c",
            "--host",
            "b",
            "--workload",
            "range",
            "--selectivity",
            "0.01",
            "--ops",
            "40",
            "--verify",
            "--json",
            str(out),
        ]
    )
    assert rc == EXIT_OK
    report = json.loads(out.read_text())
    res = report["results"]
    assert res["verify"] == {"enabled": True, "mismatches": 0}
    assert res["throughput_ops_per_s"] > 0
    if kind == "hermit":
        (breakdown,) = res["tree_breakdown"].values()
        assert set(breakdown) == {"nodes", "outlier_buffers", "overflow_buffer"}
    assert sum(res["step_time_fractions"].values()) == pytest.approx(1.0, abs=1e-6)
    mem = res["memory"]
    flat = mem["components"]
    total = sum(v for k, v in flat.items() if k != "secondary")
    total += sum(flat["secondary"].values())
    assert total == mem["total"]
    assert report["config"]["seed"] == 0


def test_bench_insert_and_mixed(data_file, tmp_path):
    for workload in ("insert", "mixed"):
        out = tmp_path / f"{workload}.json"
        rc = main(
            [
                "bench",
                "--data",
                data_file,
                "--index",
                "hermit",
                "--target",
                "c",
                "--host",
                "b",
                "--workload",
                workload,
                "--ops",
                "300",
                "--verify",
                "--json",
                str(out),
            ]
        )
        assert rc == EXIT_OK
        report = json.loads(out.read_text())
        assert report["results"]["verify"]["mismatches"] == 0


def test_bench_logical_scheme(data_file, tmp_path):
    out = tmp_path / "log.json"
    rc = main(
        [
            "bench",
            "--data",
            data_file,
            "--index",
            "hermit",
            "--target",
            "c",
            "--host",
            "b",
            "--scheme",
            "logical",
            "--ops",
            "30",
            "--verify",
            "--json",
            str(out),
        ]
    )
    assert rc == EXIT_OK
    fr = json.loads(out.read_text())["results"]["step_time_fractions"]
    assert fr["primary_index"] > 0.0


def test_memory_command(tmp_path):
    clean = tmp_path / "clean.csv"
    assert (
        main(
            [
                "generate",
                "--kind",
                "linear",
                "--rows",
                "4000",
                "--noise",
                "0.0",
                "--seed",
                "3",
                "--out",
                str(clean),
            ]
        )
        == EXIT_OK
    )
    out = tmp_path / "mem.json"
    rc = main(
        [
            "memory",
            "--data",
            str(clean),
            "--host",
            "b",
            "--target",
            "c",
            "--indexes",
            "3",
            "--json",
            str(out),
        ]
    )
    assert rc == EXIT_OK
    series = json.loads(out.read_text())["results"]["series"]
    assert [row["indexes"] for row in series] == [1, 2, 3]
    # one shared host index amortizes across indexes: each extra index costs
    # a full ordered map for the baseline but only a tree for hermit
    assert series[-1]["hermit_total"] < series[-1]["baseline_total"]
    h_inc = series[-1]["hermit_total"] - series[0]["hermit_total"]
    b_inc = series[-1]["baseline_total"] - series[0]["baseline_total"]
    assert h_inc < b_inc


def test_reorg_trace(tmp_path):
    data = tmp_path / "sig.csv"
    assert (
        main(
            [
                "generate",
                "--kind",
                "sigmoid",
                "--rows",
                "6000",
                "--noise",
                "0.01",
                "--seed",
                "4",
                "--out",
                str(data),
            ]
        )
        == EXIT_OK
    )
    out = tmp_path / "trace.json"
    rc = main(
        [
            "reorg-trace",
            "--data",
            str(data),
            "--target",
            "c",
            "--host",
            "b",
            "--interval",
            "0.05",
            "--fraction",
            "0.5",
            "--stages",
            "2",
            "--json",
            str(out),
        ]
    )
    assert rc == EXIT_OK
    trace = json.loads(out.read_text())["results"]["trace"]
    assert trace[0]["phase"] == "pre"
    assert all("memory_total" in row and "throughput_ops_per_s" in row for row in trace)


def test_kernels_command(tmp_path):
    out = tmp_path / "k.json"
    rc = main(["kernels", "--rows", "20000", "--repeats", "2", "--json", str(out)])
    assert rc == EXIT_OK
    report = json.loads(out.read_text())
    assert "python" in report["results"]["timings"]


def test_exit_codes(data_file, tmp_path, monkeypatch):
    # usage error: unknown index kind
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--data", data_file, "--index", "btree", "--target", "c"])
    assert exc.value.code == EXIT_USAGE
    # data error: missing file
    rc = main(
        ["build", "--data", str(tmp_path / "nope.csv"), "--index", "baseline", "--target", "c"]
    )
    assert rc == EXIT_DATA
    # data error: nonsense parameter
    rc = main(
        [
            "build",
            "--data",
            data_file,
            "--index",
            "hermit",
            "--target",
            "c",
            "--host",
            "b",
            "--params",
            "bogus_param=1",
        ]
    )
    assert rc == EXIT_DATA


def test_verification_failure_exit_code(data_file, tmp_path, monkeypatch):
    # force a mismatch by breaking the lookup path
    import hermit.cli as cli_mod
    import numpy as np

    class Broken:
        def __init__(self, inner):
            self.inner = inner

        def __call__(self, pred):
            slots, metrics = self.inner(pred)
            return slots[:-1], metrics  # drop one row

    orig = cli_mod._lookup_fn

    def broken_lookup_fn(engine, handles):
        return Broken(orig(engine, handles))

    monkeypatch.setattr(cli_mod, "_lookup_fn", broken_lookup_fn)
    rc = main(
        [
            "bench",
            "--data",
            data_file,
            "--index",
            "hermit",
            "--target",
            "c",
            "--host",
            "b",
            "--workload",
            "range",
            "--selectivity",
            "0.01",
            "--ops",
            "20",
            "--verify",
            "--json",
            str(tmp_path / "broken.json"),
        ]
    )
    assert rc == 4


def test_hermit_seed_env_override(data_file, tmp_path, monkeypatch):
    monkeypatch.setenv("HERMIT_SEED", "777")
    out = tmp_path / "seeded.json"
    rc = main(
        [
            "bench",
            "--data",
            data_file,
            "--index",
            "baseline",
            "--target",
            "c",
            "--ops",
            "10",
            "--seed",
            "1",
            "--json",
            str(out),
        ]
    )
    assert rc == EXIT_OK
    assert json.loads(out.read_text())["config"]["seed"] == 777

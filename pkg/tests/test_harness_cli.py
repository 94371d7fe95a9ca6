import json
import os

import numpy as np
import pytest

from sscfw import cli, harness
from sscfw.harness import (ConfigError, ProblemConfig, bench_suite,
                           default_start, generate_problem, log_gap_fit,
                           random_indefinite, random_spd, read_trace_csv,
                           reference_qp_simplex, run_config, verify_trace_rows,
                           write_summary_json, write_trace_csv)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def base_config(**overrides):
    raw = {
        "schema": 1,
        "name": "t",
        "domain": {"family": "simplex", "scale": 1.0, "dim": 3},
        "objective": {"kind": "quadratic",
                      "q": {"source": "random-spd", "seed": 11, "mu": 1.0, "l": 10.0},
                      "b": {"seed": 5, "scale": 1.0}},
        "method": {"name": "afw"},
        "eps_stat": 1e-9,
        "max_iter": 300,
        "tau": {"source": "theoretical"},
        "seed": 0,
    }
    raw.update(overrides)
    return ProblemConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# generators


def test_random_spd_spectrum():
    Q = random_spd(7, 1.0, 10.0, 20)
    evs = np.linalg.eigvalsh(Q)
    assert evs[0] == pytest.approx(1.0, abs=1e-9)
    assert evs[-1] == pytest.approx(10.0, abs=1e-9)
    assert np.all(evs >= 1.0 - 1e-9) and np.all(evs <= 10.0 + 1e-9)


def test_random_indefinite_negative_curvature():
    Q = random_indefinite(3, 8)
    evs = np.linalg.eigvalsh(Q)
    assert evs[0] < 0
    # Rayleigh check along the bottom eigenvector
    v = np.linalg.eigh(Q)[1][:, 0]
    assert float(v @ (Q @ v)) < 0


def test_explicit_simplex_identity_minimizer():
    cfg = base_config(objective={"kind": "quadratic",
                                 "q": {"source": "explicit",
                                       "matrix": np.eye(3).tolist()},
                                 "b": {"values": [0.0, 0.0, 0.0]}})
    obj, dom, x0 = generate_problem(cfg)
    run = harness.outer_solve(obj, dom, harness.make_method("afw"), x0,
                              tau=0.43, eps_stat=1e-10, max_iter=200)
    np.testing.assert_allclose(run.records[-1].x_out, np.ones(3) / 3, atol=1e-6)


def test_generate_problem_deterministic():
    cfg = base_config()
    o1, d1, x1 = generate_problem(cfg)
    o2, d2, x2 = generate_problem(cfg)
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(5, 3))
    for p in pts:
        assert o1.value(p) == o2.value(p)
    np.testing.assert_array_equal(x1, x2)


def test_admissibility_validation():
    with pytest.raises(ConfigError):
        run_config(base_config(domain={"family": "lpball", "p": 2.0, "dim": 3},
                               method={"name": "afw"},
                               tau={"source": "user", "value": 0.3}))
    with pytest.raises(ConfigError):
        run_config(base_config(method={"name": "sor"}))


def test_config_rejects_unknown_fields_and_schema():
    with pytest.raises(ConfigError):
        ProblemConfig.from_dict({"schema": 2})
    raw = base_config().__dict__.copy()
    raw["surprise"] = 1
    with pytest.raises(ConfigError):
        ProblemConfig.from_dict(raw)


def test_named_objective_double_well():
    cfg = base_config(domain={"family": "box", "scale": 2.0, "dim": 4},
                      objective={"kind": "named", "name": "double_well"},
                      method={"name": "fdfw"},
                      tau={"source": "user", "value": 0.2})
    obj, dom, x0 = generate_problem(cfg)
    assert obj.value(np.ones(4)) == 0.0
    run = harness.outer_solve(obj, dom, harness.make_method("fdfw"), x0,
                              tau=0.2, eps_stat=1e-7, max_iter=100)
    assert run.records[-1].f <= run.records[0].f


# ---------------------------------------------------------------------------
# trace persistence


def test_trace_roundtrip_and_determinism(tmp_path):
    cfg = base_config()
    run1, obj1, dom1, m1, tau1 = run_config(cfg)
    run2, obj2, dom2, m2, tau2 = run_config(cfg)
    p1, p2 = tmp_path / "a.trace.csv", tmp_path / "b.trace.csv"
    write_trace_csv(p1, run1, obj1, tau1)
    write_trace_csv(p2, run2, obj2, tau2)
    rows1, rows2 = read_trace_csv(p1), read_trace_csv(p2)
    assert len(rows1) == len(rows2)
    for r1, r2 in zip(rows1, rows2):
        for col in ("k", "f", "gap_proxy", "inner_steps", "case", "pi_tilde", "cum_len"):
            assert r1[col] == r2[col]          # bit-identical except wall_ms


def test_trace_format_details(tmp_path):
    cfg = base_config(max_iter=5)
    run, obj, dom, m, tau = run_config(cfg)
    path = tmp_path / "t.trace.csv"
    write_trace_csv(path, run, obj, tau)
    blob = path.read_bytes()
    assert b"\r" not in blob                   # LF endings
    text = blob.decode()
    assert text.splitlines()[0] == "k,f,gap_proxy,inner_steps,case,pi_tilde,cum_len,wall_ms"
    val = text.splitlines()[1].split(",")[1]
    assert "." in val or "e" in val            # '.' decimal separator
    assert float(val) == run.records[0].f      # 17 significant digits round-trip


def test_verify_trace_rows_clean_and_tampered(tmp_path):
    cfg = base_config()
    run, obj, dom, m, tau = run_config(cfg)
    path = tmp_path / "t.trace.csv"
    write_trace_csv(path, run, obj, tau)
    rows = read_trace_csv(path)
    L = obj.lipschitz_L
    K = tau / (L * (1 + tau))
    assert verify_trace_rows(rows, L, K) == []
    bad = [dict(r) for r in rows]
    bad[2]["f"] = bad[1]["f"] + 1.0
    names = {f[0] for f in verify_trace_rows(bad, L, K)}
    assert "f_monotone" in names or "sufficient_decrease" in names


# ---------------------------------------------------------------------------
# observed tau source


def test_observed_tau_source():
    cfg = base_config(tau={"source": "observed"}, max_iter=60)
    run, obj, dom, m, tau = run_config(cfg)
    from sscfw import verify_descent
    rep = verify_descent(run, obj, dom, tau * (1 - 1e-12))
    assert rep.passed
    assert 0 < tau <= 1.0


# ---------------------------------------------------------------------------
# bench


def test_bench_report_complete(tmp_path):
    reports = bench_suite([base_config(max_iter=40)])
    assert len(reports) == 1
    certs = reports[0].certifications
    for name in ("f_consistent", "sufficient_decrease", "aux_slope",
                 "aux_sandwich", "gap_decrease", "rate_bound", "slope"):
        assert name in certs
        assert certs[name]["passed"]
        assert "worst_violation" in certs[name]


def test_bench_parallel_matches_serial(monkeypatch):
    cfgs = [base_config(name=f"p{i}", max_iter=25) for i in range(3)]
    serial = bench_suite(cfgs, max_workers=1)
    parallel = bench_suite(cfgs, max_workers=3)
    monkeypatch.setenv("SSC_FW_THREADS", "2")
    via_env = bench_suite(cfgs)
    for a, b, c in zip(serial, parallel, via_env):
        assert a.name == b.name == c.name
        assert a.iterations == b.iterations == c.iterations
        assert a.f_last == b.f_last == c.f_last


def test_log_gap_fit_geometric_sequence():
    fs = 2.0 ** (-np.arange(60, dtype=float))
    slope, r2 = log_gap_fit(fs + 0.0, 0.0)
    assert slope == pytest.approx(np.log10(0.5), rel=1e-6)
    assert r2 >= 0.999


# ---------------------------------------------------------------------------
# reference solver


def test_reference_qp_simplex_identity():
    x, f = reference_qp_simplex(np.eye(3), np.zeros(3))
    np.testing.assert_allclose(x, np.ones(3) / 3, atol=1e-10)
    assert f == pytest.approx(1.0 / 6.0, abs=1e-12)


def test_reference_qp_matches_kkt():
    rng = np.random.default_rng(4)
    Q = random_spd(9, 1.0, 10.0, 6)
    b = rng.normal(size=6)
    x, f = reference_qp_simplex(Q, b)
    g = Q @ x - b
    # KKT on the simplex: gradient equal on the support, larger elsewhere
    sup = x > 1e-9
    mu = g[sup].mean()
    assert np.allclose(g[sup], mu, atol=1e-7)
    assert np.all(g[~sup] >= mu - 1e-7)


# ---------------------------------------------------------------------------
# CLI


def test_cli_solve_verify_rates_roundtrip(tmp_path):
    cfg_path = os.path.join(CONFIG_DIR, "qp_simplex_afw.json")
    assert cli.main(["solve", cfg_path, "--out-dir", str(tmp_path)]) == 0
    trace = str(tmp_path / "qp_simplex_afw.trace.csv")
    assert cli.main(["verify", trace]) == 0
    # KL certification against a reference optimum
    with open(cfg_path) as fh:
        raw = json.load(fh)
    cfg = ProblemConfig.from_dict(raw)
    obj, dom, x0 = generate_problem(cfg)
    Q = random_spd(11, 1.0, 10.0, 3)
    bvec = np.random.default_rng(5).normal(size=3)
    _, f_star = reference_qp_simplex(Q, bvec)
    code = cli.main(["rates", trace, "--M", "2.0", "--theta", "0.5",
                     "--fstar", str(f_star)])
    assert code == 0


def test_cli_verify_exit_2_on_tamper(tmp_path):
    cfg_path = os.path.join(CONFIG_DIR, "qp_simplex_afw.json")
    cli.main(["solve", cfg_path, "--out-dir", str(tmp_path)])
    trace = tmp_path / "qp_simplex_afw.trace.csv"
    lines = trace.read_text().splitlines()
    parts = lines[3].split(",")
    parts[1] = repr(float(parts[1]) + 0.5)     # tamper f upward
    lines[3] = ",".join(parts)
    trace.write_text("\n".join(lines) + "\n")
    assert cli.main(["verify", str(trace)]) == 2


def test_cli_pwidth_prints_segment(tmp_path, capsys):
    seg = os.path.join(CONFIG_DIR, "segment.json")
    assert cli.main(["pwidth", seg]) == 0
    assert capsys.readouterr().out.strip() == "1.0"


def test_cli_bench(tmp_path):
    suite = os.path.join(CONFIG_DIR, "bench_small.json")
    out = str(tmp_path / "report.json")
    assert cli.main(["bench", suite, "--out", out]) == 0
    with open(out) as fh:
        payload = json.load(fh)
    assert len(payload) == 3
    for entry in payload:
        assert entry["certifications"]


def test_cli_error_exit_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": 99}))
    assert cli.main(["solve", str(bad)]) == 1
    assert cli.main(["solve", str(tmp_path / "missing.json")]) == 1


def test_named_objective_gradient_matches_fd():
    from sscfw import finite_difference_grad_check
    from sscfw.harness import named_objective
    obj = named_objective("double_well", 4)
    rng = np.random.default_rng(12)
    for _ in range(100):
        x = rng.uniform(-2.0, 2.0, size=4)
        assert finite_difference_grad_check(obj, x, 1e-6) <= 1e-6


def test_runtrace_requires_contiguous_indices():
    from sscfw import RunTrace
    from sscfw.core import OuterStepRecord, TerminationCase
    rec = lambda k: OuterStepRecord(k=k, x=np.zeros(2), x_out=np.zeros(2),
                                    x_aux=np.zeros(2), f=0.0, inner_steps=0,
                                    case=TerminationCase.CASE1, pi_aux=0.0)
    with pytest.raises(ValueError):
        RunTrace(records=[rec(0), rec(2)])
    RunTrace(records=[rec(0), rec(1)])   # contiguous: fine

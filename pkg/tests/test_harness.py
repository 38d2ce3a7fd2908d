import json
import time

import numpy as np
import pytest

from skewcone.errors import ConfigurationError
from skewcone.harness import runner as runner_mod
from skewcone.harness.cli import main
from skewcone.harness.report import ERROR, FAIL, PASS, CheckOutcome, RunReport
from skewcone.harness.runner import DEFAULT_SUITE, bundled_config, bundled_names, resolve_config, run, sweep


def _linear(checks, **system):
    return {"schema_version": 1, "name": "t", "seed": 3,
            "system": {"kind": "linear-test", "matrix": [[-1.0, 1.0], [1.0, -2.0]], **system}, "checks": checks}


def _tridiag(preset, checks, **system):
    return {"schema_version": 1, "name": "t", "seed": 0,
            "system": {"kind": "tridiag", "preset": preset, **system}, "checks": checks}


def test_every_suite_config_is_bundled():
    assert set(DEFAULT_SUITE) <= set(bundled_names())
    for name in bundled_names():
        assert bundled_config(name).name == name


def test_linear_2d_is_quick_and_passes():
    t0 = time.perf_counter()
    rep = run("linear-2d")
    assert time.perf_counter() - t0 < 5.0
    assert rep.passed and rep.exit_code == 0
    assert [o.name for o in rep.outcomes] == ["difference-identity", "axiom-battery", "splitting-oracle"]


def test_same_seed_gives_identical_body():
    a, b = run("linear-2d", seed=17), run("linear-2d", seed=17)
    assert a.body_json() == b.body_json()
    assert run("linear-2d", seed=18).body_json() != a.body_json()


def test_check_streams_do_not_shift_when_checks_are_appended():
    one = run(resolve_config(_linear([{"name": "difference-identity", "samples": 5}])))
    two = run(resolve_config(_linear([{"name": "difference-identity", "samples": 5},
                                      {"name": "splitting-oracle", "horizon": 20}])))
    assert one.outcomes[0].to_dict() == two.outcomes[0].to_dict()


@pytest.mark.parametrize("eps", [0.1, -0.2, 1.0])
def test_eps_violation_names_the_bound(eps):
    with pytest.raises(ConfigurationError, match=r"system\.tridiag.*\|eps\| \* M_g < delta = 0\.1"):
        resolve_config(_tridiag("chain5", [{"name": "difference-identity"}], eps=eps))


def test_eps_inside_bound_is_accepted():
    assert resolve_config(_tridiag("chain5", [{"name": "difference-identity"}], eps=0.09)).system.eps == 0.09


@pytest.mark.parametrize("kind, eps, text", [
    ("parabolic-nonlocal", 2.0, "nonlocal feasibility bound"),
    ("parabolic-chemotaxis", 5.0, "chemotaxis feasibility bound"),
])
def test_parabolic_eps_bounds(kind, eps, text):
    check = {"parabolic-nonlocal": "nonlocal-bound", "parabolic-chemotaxis": "chemotaxis-bound"}[kind]
    with pytest.raises(ConfigurationError, match=text):
        resolve_config({"schema_version": 1, "name": "p", "seed": 0, "system": {"kind": kind, "eps": eps},
                        "checks": [{"name": check}]})


@pytest.mark.parametrize("mutate, fragment", [
    (lambda d: d.update(schema_version=2), "schema_version"),
    (lambda d: d.update(seed=-1), "seed"),
    (lambda d: d.update(seed=2**64), "seed"),
    (lambda d: d.update(checks=[]), "checks"),
    (lambda d: d["checks"].append({"name": "heat-convergence"}), "does not apply"),
    (lambda d: d["checks"].append({"name": "difference-identity"}), "listed twice"),
    (lambda d: d["checks"].append({"name": "no-such-check"}), "checks.1"),
    (lambda d: d["system"].update(matrix=[[1.0, 2.0]]), "square"),
    (lambda d: d.update(extra_field=1), "extra_field"),
])
def test_invalid_configs_report_field_paths(mutate, fragment):
    data = _linear([{"name": "difference-identity"}])
    mutate(data)
    with pytest.raises(ConfigurationError, match=fragment):
        resolve_config(data)


def test_pitchfork_only_checks_are_guarded():
    with pytest.raises(ConfigurationError, match="pitchfork"):
        resolve_config(_tridiag("chain5", [{"name": "omega-capture"}]))


def test_config_hash_ignores_output_dir():
    a = resolve_config(_linear([{"name": "difference-identity"}]))
    b = resolve_config({**_linear([{"name": "difference-identity"}]), "output_dir": "/tmp/x"})
    c = resolve_config({**_linear([{"name": "difference-identity"}]), "seed": 4})
    assert a.config_hash() == b.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 64


def test_missing_config_file_and_name(tmp_path):
    with pytest.raises(ConfigurationError, match="no bundled config"):
        resolve_config("not-a-config")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigurationError, match="invalid JSON"):
        resolve_config(bad)


def test_failing_and_erroring_checks_do_not_stop_siblings(monkeypatch):
    def boom(system, opt, rng):
        raise RuntimeError("deliberate")

    def flop(system, opt, rng):
        return CheckOutcome("axiom-battery", FAIL, -1.0, message="deliberate")

    monkeypatch.setitem(runner_mod.CHECKS, "difference-identity", boom)
    monkeypatch.setitem(runner_mod.CHECKS, "axiom-battery", flop)
    rep = run("linear-2d")
    status = {o.name: o.status for o in rep.outcomes}
    assert status == {"difference-identity": ERROR, "axiom-battery": FAIL, "splitting-oracle": PASS}
    assert "RuntimeError: deliberate" in rep.outcome("difference-identity").message
    assert not rep.passed and rep.exit_code == 1


def test_report_round_trip(tmp_path):
    rep = run("linear-2d", out=tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert set(data) == {"body", "meta"}
    assert RunReport.from_dict(data).body_json() == rep.body_json()
    with pytest.raises(ValueError):
        RunReport.from_dict({"body": {**data["body"], "schema_version": 99}})


def test_report_writes_check_tables(tmp_path):
    run("linear-test", out=tmp_path)
    assert (tmp_path / "report.json").exists()
    assert list(tmp_path.glob("*.csv"))


def test_nonfinite_metrics_serialise():
    o = CheckOutcome("x", PASS, float("inf"), {"a": np.float64("nan"), "b": np.arange(2)})
    d = o.to_dict()
    assert d["margin"] == "inf" and d["headline"] == {"a": "nan", "b": [0, 1]}
    json.dumps(d)


def test_single_point_sweep_matches_run():
    reports, rows = sweep("linear-2d", "seed", [17])
    # the seed is part of the hashed config, so compare against that config
    direct = run({**bundled_config("linear-2d").model_dump(mode="json"), "seed": 17})
    assert reports[0].body_json() == direct.body_json()
    assert rows[0]["status"] == "pass"


def test_sweep_rejects_bad_axes():
    with pytest.raises(ConfigurationError, match="no field"):
        sweep("linear-2d", "system.nope", [1])
    with pytest.raises(ConfigurationError, match="not a numeric scalar"):
        sweep("linear-2d", "system.kind", [1])


def test_sweep_marks_invalid_points():
    reports, rows = sweep("linear-test-eps", "system.eps", [-1.0])
    assert reports == [None] and rows[0]["status"] == "config-error"


def test_eps_sweep_invariance_margin_is_monotone(tmp_path):
    values = [0.0, 1e-4, 1e-3, 1e-2, 1e-1]
    reports, rows = sweep("linear-test-eps", "system.eps", values, workers=2, out=tmp_path)
    margins = [r["perturbed-cone.invariance_margin"] for r in rows]
    assert all(b <= a for a, b in zip(margins, margins[1:]))
    assert margins[0] > 0 > margins[-1]
    assert (tmp_path / "summary.csv").read_text().count("\n") == len(values) + 1


def test_heat_sweep_over_resolution_gives_second_order():
    reports, rows = sweep("heat-convergence", "system.N", [16, 32], seed=0)
    for rep in reports:
        ratios = rep.outcome("heat-convergence").metrics["ratios"]
        assert all(abs(r - 4.0) <= 0.5 for r in ratios)


def test_axis_shorthand_addresses_check_options():
    reports, rows = sweep("heat-convergence", "heat-convergence.t", [0.05])
    assert reports[0].outcome("heat-convergence").passed


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "--config", "linear-2d"]) == 0
    failing = tmp_path / "fail.json"
    failing.write_text(json.dumps({**json.loads(json.dumps(bundled_config("linear-test-eps").model_dump(mode="json"))),
                                   "system": {"kind": "linear-test", "eps": 0.5}}))
    assert main(["run", "--config", str(failing)]) == 1
    assert main(["run", "--config", "no-such-thing"]) == 2
    assert main(["run"]) == 2
    assert main(["sweep", "--config", "linear-2d", "--axis", "system.nope", "--values", "1"]) == 2
    assert main(["sweep", "--config", "linear-test-eps", "--axis", "system.eps", "--values", "-1"]) == 2
    assert main(["battery", "--config", "heat-convergence"]) == 2
    err = capsys.readouterr().err
    assert "configuration error" in err


def test_cli_battery_and_report(tmp_path, capsys):
    assert main(["battery", "--config", "linear-2d", "--out", str(tmp_path / "b")]) == 0
    out = capsys.readouterr().out
    assert '"H1.status": "pass"' in out
    assert main(["report", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "empty")]) == 2


def test_cli_seed_must_be_u64():
    with pytest.raises(SystemExit):
        main(["run", "--config", "linear-2d", "--seed", "-3"])

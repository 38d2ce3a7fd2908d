"""The ten acceptance criteria, each at its stated tolerance, on the bundled suite."""

import numpy as np
import pytest

import conftest
from skewcone.harness.runner import DEFAULT_SUITE, bundled_config, run_suite

SEED = None  # each bundled config keeps its own seed


@pytest.fixture(scope="module")
def suite():
    reports = run_suite(seed=SEED)
    return {r.config_name: r for r in reports}


def verdict(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}: {detail}"
    conftest.ACCEPTANCE_LINES[f"{number:02d}"] = line
    print(line)
    assert ok, line


def options(config, check):
    for c in bundled_config(config).checks:
        if c.name == check:
            return c
    raise KeyError(check)


def _walk_minimal_counts(obj, found):
    if isinstance(obj, dict):
        if "minimal_count" in obj and obj.get("classification") not in (None, "inconclusive"):
            found.append(obj["minimal_count"])
        for v in obj.values():
            _walk_minimal_counts(v, found)
    elif isinstance(obj, list):
        for v in obj:
            _walk_minimal_counts(v, found)


def test_01_difference_identity(suite):
    opt = options("chain5", "difference-identity")
    sysc = bundled_config("chain5").system
    assert sysc.preset == "chain5" and sysc.forcing_amplitude > 0
    assert opt.samples == 100 and tuple(opt.times) == (0.5, 1.0, 2.0, 5.0) and opt.tol == 1e-8
    h = suite["chain5"].outcome("difference-identity").headline
    ok = h["identity_residual"] <= 10 * opt.tol and h["composition_residual"] <= 1e-8
    verdict(1, "cocycle difference identity", ok,
            f"identity {h['identity_residual']:.3g} <= 1e-7, composition {h['composition_residual']:.3g} <= 1e-8")


def test_02_discrete_lyapunov_monotonicity(suite):
    so = options("chain5", "sigma-monotonicity")
    zo = options("parabolic-zero-number", "zero-number")
    assert so.samples == 100 and so.horizon == 20.0
    assert zo.runs == 20 and bundled_config("parabolic-zero-number").system.N == 128
    s = suite["chain5"].outcome("sigma-monotonicity").headline
    z = suite["parabolic-zero-number"].outcome("zero-number").headline
    ok = s["violations"] == 0 and s["regular_instants"] > 0 and z["violations"] == 0
    verdict(2, "sigma and Z non-increasing", ok,
            f"sigma violations {s['violations']} over {s['regular_instants']} regular instants, "
            f"Z violations {z['violations']} over 20 runs at N = 128")


def test_03_axiom_battery(suite):
    parts, ok = [], True
    for name in ("cubic-pair", "chain5", "linear-2d"):
        h = suite[name].outcome("axiom-battery").headline
        for ax in ("H1", "H3", "H4", "H5"):
            good = h[f"{ax}.status"] == "pass" and h[f"{ax}.margin"] > 0
            ok &= good
        parts.append(f"{name} min margin {min(h[f'{a}.margin'] for a in ('H1', 'H3', 'H4', 'H5')):.3g}")
    h = suite["noncoop-control"].outcome("axiom-battery").headline
    ok &= h["H1.status"] == "pass" and h["H4.status"] == "fail"
    parts.append(f"noncoop H1 {h['H1.status']}, H4 {h['H4.status']}")
    verdict(3, "axiom battery", ok, "; ".join(parts))


def test_04_splitting_oracle(suite):
    opt = options("linear-test", "splitting-oracle")
    assert tuple(opt.sizes) == (2, 3, 5) and opt.angle_tol == 1e-6 and opt.gap_tol == 1e-4
    out = suite["linear-test"].outcome("splitting-oracle")
    sizes = sorted({row["n"] for row in out.metrics["rows"]})
    h = out.headline
    ok = sizes == [2, 3, 5] and h["max_angle"] <= 1e-6 and h["max_gap_error"] <= 1e-4
    verdict(4, "splitting oracle", ok,
            f"n in {sizes}, max angle {h['max_angle']:.3g}, max gap error {h['max_gap_error']:.3g}")


def test_05_constants_ledger(suite):
    opt = options("linear-test", "cone-constants")
    assert bundled_config("linear-test").system.delta == 0.01 and opt.transport_count == 1000
    out = suite["linear-test"].outcome("cone-constants")
    sl, tr = out.metrics["slacks"], out.metrics["transport"]
    slack_ok = all(sl[f"{k}_residual"] <= 0 and (sl[f"{k}_at_boundary"] or abs(sl[f"{k}_residual"]) <= 1e-6)
                   for k in ("T1", "T0") if f"{k}_residual" in sl)
    ok = out.headline["lambda0"] < 1 and slack_ok and tr["passed"] and tr["trials"] >= 1000 and out.passed
    verdict(5, "cone constants ledger", ok,
            f"lambda0 {out.headline['lambda0']:.4g}, T1 slack {sl.get('T1_residual', 0):.2g}, "
            f"T0 slack {sl['T0_residual']:.2g}, transport {tr['trials']} vectors worst margin {tr['worst_margin']:.3g}")


def test_06_perturbed_cone_suite(suite):
    opt = options("linear-test", "eps1-search")
    assert opt.verify_seeds == 3 and opt.stress_factor == 100.0
    out = suite["linear-test"].outcome("eps1-search")
    eps1 = out.headline["eps1"]
    verify = out.metrics["verify"]
    lemmas = ("invariance", "contraction", "decay")
    ok = (len(verify) == 3 and all(v["passed"] and np.isclose(v["eps"], eps1 / 2) for v in verify)
          and all(v["checks"][k]["passed"] for v in verify for k in lemmas)
          and out.metrics["stress"]["eps"] == pytest.approx(100 * eps1)
          and out.headline["stress_violations"] > 0)
    verdict(6, "perturbed cone suite", ok,
            f"eps1 {eps1:.3g}, 3 seeds pass at eps1/2 (margin {out.headline['verify_margin']:.3g}), "
            f"stress 100 eps1 violations {out.headline['stress_violations']}")


def test_07_dichotomy(suite):
    po = options("pitchfork", "dichotomy-pairs")
    assert po.starts == 50 and tuple(po.start_range) == (1.0, 3.0) and po.expect_index == 1
    do = options("diag-decay", "dichotomy-decay")
    assert do.rate_tol == 0.05
    p = suite["pitchfork"].outcome("dichotomy-pairs")
    d = suite["diag-decay"].outcome("dichotomy-decay").headline
    ok = (p.headline["bad"] == 0 and p.headline["pairs"] == 50 * 49 // 2
          and set(p.metrics["branches"]) == {"cone_lock:1"}
          and abs(d["rate"] - (-2.0)) <= 0.05 * 2.0)
    verdict(7, "dichotomy", ok,
            f"{p.headline['pairs']} pitchfork pairs, {p.headline['bad']} without lock at i = 1; "
            f"diag decay rate {d['rate']:.4g} vs -2")


def test_08_trichotomy_and_cover(suite):
    opt = options("pitchfork", "omega-capture")
    assert tuple(opt.x0) == (2.0,) and opt.horizons[0] == 2000.0 and opt.diameter_tol == 1e-3
    assert opt.min_fraction == 0.95 and any(h >= 2 * opt.horizons[0] for h in opt.horizons)
    out = suite["pitchfork"].outcome("omega-capture")
    rows = out.metrics["horizons"]
    fractions = [r["fraction_single"] for r in rows]
    counts = []
    for rep in suite.values():
        for o in rep.outcomes:
            _walk_minimal_counts(o.to_dict(), counts)
    ok = (rows[0]["classification"] == "single-minimal" and fractions[0] >= 0.95
          and all(b >= a for a, b in zip(fractions, fractions[1:]))
          and bool(counts) and max(counts) <= 2)
    verdict(8, "trichotomy and almost 1-cover", ok,
            f"{rows[0]['classification']} at horizon {rows[0]['horizon']:g}, fraction_single by horizon "
            f"{fractions}, max minimal_count {max(counts) if counts else None} over {len(counts)} reports")


def test_09_parabolic_bounds(suite):
    no = options("parabolic-nonlocal", "nonlocal-bound")
    assert no.starts == 50 and no.slack == 0.05
    assert bundled_config("parabolic-nonlocal").system.eps == 0.5
    n = suite["parabolic-nonlocal"].outcome("nonlocal-bound").headline
    c = suite["parabolic-chemotaxis"].outcome("chemotaxis-bound").headline
    h = suite["heat-convergence"].outcome("heat-convergence")
    ratios = h.metrics["ratios"]
    ok = (n["M_star"] == 2.0 and n["sup_tail"] <= 2.05
          and c["C"] <= 5.6595 and c["max_ratio"] <= 5.6595 and c["max_residual"] <= 1e-6
          and len(ratios) >= 1 and all(abs(r - 4.0) <= 0.5 for r in ratios))
    verdict(9, "parabolic bounds", ok,
            f"nonlocal sup tail {n['sup_tail']:.4g} <= 2.05; chemotaxis |v|/|u| {c['max_ratio']:.4g} <= 5.6595, "
            f"residual {c['max_residual']:.2g}; heat ratios {[round(r, 3) for r in ratios]}")


def test_10_determinism(suite):
    again = run_suite(seed=SEED)
    same = [r.config_name for r in again if r.body_json() == suite[r.config_name].body_json()]
    ok = len(again) == len(DEFAULT_SUITE) and len(same) == len(DEFAULT_SUITE)
    verdict(10, "determinism", ok, f"{len(same)} of {len(DEFAULT_SUITE)} report bodies identical on rerun")

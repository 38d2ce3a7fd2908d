"""Check implementations: ``fn(system_cfg, options, rng) -> CheckOutcome``.

Checks never raise on a failed property; they return a failing outcome with
the evidence.  Exceptions are caught by the runner and reported as errors.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import subspace_angles

from ..cocycle import (CocyclePoint, ConstantCocycle, PerturbedCocycle, SamplePlan, axiom_battery, difference_identity_check,
                       propagate, sigma_monotonicity)
from ..forcing import TorusPoint
from ..omega import (INCONCLUSIVE, SINGLE, SignConeFamily, almost_one_cover_test, capture_omega,
                     classify_trichotomy, dichotomy_check, sample_references)
from ..parabolic import (CHEMO_C, chemotaxis_diagnostics, dissipativity_bounds, heat_convergence,
                         linearized_parabolic, run as run_parabolic)
from ..separation import (SplittingConeFamily, compute_constants, compute_splittings, perturbed_cone_suite,
                          search_eps1, transport_check)
from ..tridiag import Orbit, check_dissipative_box, integrate
from .config import CHECK_SYSTEMS
from .report import FAIL, PASS, CheckOutcome
from .systems import build_ode, build_parabolic, build_tridiag, constant_cocycle

TWO_PI = 2.0 * math.pi


def _status(ok: bool) -> str:
    return PASS if ok else FAIL


def _seed(rng) -> int:
    return int(rng.integers(2**31))


def _smooth_starts(spec, count: int, rng, lo: float, hi: float, modes: int = 5) -> np.ndarray:
    """Random cosine sums on the grid, sup norm uniform in [lo, hi]; shape (size, count)."""
    x = spec.x
    coef = rng.uniform(-1.0, 1.0, size=(modes, count))
    k = np.arange(modes)[:, None]
    u = np.cos(math.pi * k * x[None, :]).T @ coef
    u /= np.max(np.abs(u), axis=0)
    return u * rng.uniform(lo, hi, size=count)


# -- cocycle level --


def difference_identity(system, opt, rng) -> CheckOutcome:
    r = difference_identity_check(build_ode(system), rng, opt.samples, opt.times, opt.tol, opt.box)
    limit = 10.0 * opt.tol
    ident, comp = r["max_identity_residual"], r["composition_residual"]
    margin = min(1.0 - ident / limit, 1.0 - comp / opt.composition_tol)
    return CheckOutcome("difference-identity", _status(ident <= limit and comp <= opt.composition_tol), margin,
                        {"identity_residual": ident, "composition_residual": comp}, r)


def sigma_monotone(system, opt, rng) -> CheckOutcome:
    r = sigma_monotonicity(build_ode(system), rng, opt.samples, opt.horizon, opt.dt, opt.tol, opt.box)
    count = r["violation_count"]
    metrics = {k: v for k, v in r.items() if k != "violations"}
    metrics["violations"] = r["violations"][:10]
    return CheckOutcome("sigma-monotonicity", _status(count == 0), None,
                        {"violations": count, "regular_instants": r["regular_instants"]}, metrics,
                        "" if count == 0 else f"{count} increases at regular instants",
                        {"violations": r["violations"]} if count else {})


def battery(system, opt, rng) -> CheckOutcome:
    plan = SamplePlan(samples=opt.samples, t_min=opt.t_min, horizon=opt.horizon, times=opt.times, box=opt.box,
                      tol=opt.tol)
    rep = axiom_battery(build_ode(system), plan, rng)
    mismatched, margins = [], []
    for axiom, want in sorted(opt.expect.items()):
        got = "pass" if rep.passed(axiom) else "fail"
        if got != want:
            mismatched.append(f"{axiom} expected {want}, got {got}")
        elif want == "pass":
            m = rep.results[axiom].worst_margin
            margins.append(m)
            if not m > 0:
                mismatched.append(f"{axiom} passed with nonpositive margin {m:.3g}")
    headline = {f"{k}.status": v.status for k, v in sorted(rep.results.items())}
    headline.update({f"{k}.margin": v.worst_margin for k, v in sorted(rep.results.items())
                     if not math.isnan(v.worst_margin)})
    return CheckOutcome("axiom-battery", _status(not mismatched), min(margins) if margins else None,
                        headline, rep.to_dict(), "; ".join(mismatched))


def dissipative_box(system, opt, rng) -> CheckOutcome:
    rep = check_dissipative_box(build_tridiag(system), opt.samples, rng, opt.start_radius, opt.horizon, opt.dt)
    return CheckOutcome("dissipative-box", _status(rep.entered), None,
                        {"max_entry_time": rep.max_entry_time, "violations": len(rep.violations)},
                        {"samples": rep.samples, "violations": rep.violations[:10]})


# -- splittings and the constants ledger --


def _symmetric_test_matrix(n: int) -> np.ndarray:
    return np.diag(-np.arange(1.0, n + 1.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)


def splitting_oracle(system, opt, rng) -> CheckOutcome:
    mats = [_symmetric_test_matrix(n) for n in opt.sizes] if opt.sizes else [np.array(system.matrix)]
    rows, worst_angle, worst_gap = [], 0.0, 0.0
    for a in mats:
        if not np.allclose(a, a.T):
            raise ValueError("the splitting oracle needs a symmetric matrix")
        n = a.shape[0]
        w, u = np.linalg.eigh(a)
        w, u = w[::-1], u[:, ::-1]
        sp = compute_splittings(ConstantCocycle(a), opt.horizon, rng=rng)
        for i in range(1, n):
            ang = max(float(np.max(subspace_angles(sp[i].V, u[:, :i]))),
                      float(np.max(subspace_angles(sp[i].L, u[:, :i]))))
            gap = abs(sp[i].gamma - (w[i - 1] - w[i]))
            worst_angle, worst_gap = max(worst_angle, ang), max(worst_gap, gap)
            rows.append({"n": n, "i": i, "angle": ang, "gamma": sp[i].gamma, "gap": float(w[i - 1] - w[i]),
                         "gap_error": gap})
    ok = worst_angle <= opt.angle_tol and worst_gap <= opt.gap_tol
    margin = min(1.0 - worst_angle / opt.angle_tol, 1.0 - worst_gap / opt.gap_tol)
    return CheckOutcome("splitting-oracle", _status(ok), margin,
                        {"max_angle": worst_angle, "max_gap_error": worst_gap}, {"rows": rows}, "",
                        {"frames": rows})


def _ledger(system, opt, rng):
    cc = constant_cocycle(system)
    sp = compute_splittings(cc, opt.horizon, rng=rng)
    params = compute_constants(cc, [sp], system.delta, rng=rng, samples=opt.samples)
    return cc, sp, params


def threshold_slacks(params) -> dict:
    """Residuals of the defining relations of T1 and T0 at the computed values (log form)."""
    p = params
    out = {}
    if p.M > 0 and math.isfinite(p.gamma):
        g1 = math.log(p.c * p.M) - p.gamma * p.T1 - (math.log(p.delta) - p.N0 * math.log(8.0 * p.r))
        out["T1_residual"] = g1
        out["T1_at_boundary"] = p.T1 == 0.0
    g0 = ((p.T0 - p.T1) * math.log(p.lambda0 - p.delta) + p.T1 * math.log(p.delta + p.zeta)
          - p.T0 * math.log(p.lambda0))
    out["T0_residual"] = g0
    # T0 is clamped to just above T1 + 1 when the root lies below it
    out["T0_at_boundary"] = p.T0 <= math.nextafter(p.T1 + 1.0, math.inf)
    return out


def cone_constants(system, opt, rng) -> CheckOutcome:
    cc, _, params = _ledger(system, opt, rng)
    sl = threshold_slacks(params)
    problems = []
    if not params.lambda0 < 1:
        problems.append(f"lambda0 = {params.lambda0:.6g} >= 1")
    if "T1_residual" in sl:
        r = sl["T1_residual"]
        if r > 0 or (not sl["T1_at_boundary"] and abs(r) > opt.slack):
            problems.append(f"T1 residual {r:.3g}")
    r = sl["T0_residual"]
    if r > 0 or (not sl["T0_at_boundary"] and abs(r) > opt.slack):
        problems.append(f"T0 residual {r:.3g}")
    tr = transport_check(params, cc, rng, count=opt.transport_count)
    if not tr.passed:
        problems.append(f"transport: {len(tr.counterexamples)} counterexamples")
    headline = {"N0": params.N0, "lambda0": params.lambda0, "T1": params.T1, "T0": params.T0,
                "transport_margin": tr.worst_margin}
    return CheckOutcome("cone-constants", _status(not problems), min(1.0 - params.lambda0, tr.worst_margin),
                        headline, {"params": params.to_dict(), "slacks": sl, "transport": tr.to_dict()},
                        "; ".join(problems), {"constants": [params.to_dict()]})


def perturbed_cone(system, opt, rng) -> CheckOutcome:
    cc, _, params = _ledger(system, opt, rng)
    seeds = [_seed(rng) for _ in range(opt.seeds)]
    suite_seed = _seed(rng)
    reports = [perturbed_cone_suite(params, cc, PerturbedCocycle(cc, system.eps, s),
                                    np.random.default_rng(suite_seed), samples=opt.suite_samples) for s in seeds]
    worst = {}
    for rep in reports:
        for k, c in rep.checks.items():
            worst[k] = min(worst.get(k, math.inf), c.worst_margin)
    ok = all(r.passed for r in reports)
    headline = {f"{k}_margin": v for k, v in sorted(worst.items())}
    headline["violations"] = sum(r.violations() for r in reports)
    return CheckOutcome("perturbed-cone", _status(ok), worst.get("invariance"), headline,
                        {"eps": system.eps, "seeds": seeds, "params": params.to_dict(),
                         "suites": [r.to_dict() for r in reports]})


HEADLINE_LEMMAS = ("invariance", "contraction", "decay")


def eps1_search(system, opt, rng) -> CheckOutcome:
    cc, _, params = _ledger(system, opt, rng)
    grid = np.geomspace(opt.grid_min, opt.grid_max, opt.grid_points)
    search_seeds = [_seed(rng) for _ in range(opt.search_seeds)]
    verify_seeds = [_seed(rng) for _ in range(opt.verify_seeds)]
    stress_seed, suite_seed = _seed(rng), _seed(rng)

    def make(eps, seed):
        return PerturbedCocycle(cc, eps, seed)

    eps1, rows = search_eps1(params, cc, make, search_seeds, grid, rng_seed=suite_seed, samples=opt.suite_samples)
    problems = []
    if eps1 <= 0:
        problems.append("no grid value passed")
        return CheckOutcome("eps1-search", FAIL, None, {"eps1": eps1}, {"rows": rows}, problems[0], {"search": rows})
    verify = [perturbed_cone_suite(params, cc, make(eps1 / 2, s), np.random.default_rng(suite_seed),
                                   samples=opt.suite_samples) for s in verify_seeds]
    margins = []
    for s, rep in zip(verify_seeds, verify):
        for k in HEADLINE_LEMMAS:
            margins.append(rep.checks[k].worst_margin)
            if not rep.checks[k].passed:
                problems.append(f"{k} failed at eps1/2 for seed {s}")
    stress = perturbed_cone_suite(params, cc, make(opt.stress_factor * eps1, stress_seed),
                                  np.random.default_rng(suite_seed), samples=opt.suite_samples)
    if stress.violations() == 0:
        problems.append(f"stress case {opt.stress_factor:g} * eps1 recorded no violations")
    headline = {"eps1": eps1, "stress_violations": stress.violations(),
                "verify_margin": min(margins) if margins else None}
    metrics = {"grid": grid, "rows": rows, "verify_seeds": verify_seeds,
               "verify": [r.to_dict() for r in verify], "stress": stress.to_dict(), "params": params.to_dict()}
    return CheckOutcome("eps1-search", _status(not problems), min(margins) if margins else None, headline,
                        metrics, "; ".join(problems), {"search": rows})


# -- dichotomy --


def dichotomy_pairs(system, opt, rng) -> CheckOutcome:
    spec = build_tridiag(system)
    n, m = spec.n, spec.rotation.m
    x0 = rng.uniform(opt.start_range[0], opt.start_range[1], size=(n, opt.starts))
    theta = TorusPoint(tuple(rng.uniform(0, TWO_PI, size=m)))
    i_idx, j_idx = np.triu_indices(opt.starts, 1)
    z = CocyclePoint(x0[:, i_idx], x0[:, j_idx], theta)
    t_grid = np.linspace(0.0, opt.horizon, opt.points)
    prop = propagate(spec, z, x0[:, i_idx] - x0[:, j_idx], opt.horizon, opt.tol, t_eval=t_grid)
    family = SignConeFamily(n)
    verdicts = [dichotomy_check(t_grid, prop.values[:, :, k], family) for k in range(len(i_idx))]
    counts = {}
    bad = []
    for k, v in enumerate(verdicts):
        key = f"{v.branch}:{v.lock_index}"
        counts[key] = counts.get(key, 0) + 1
        if v.branch != "cone_lock" or v.lock_index != opt.expect_index or v.h_crossings:
            bad.append({"pair": [int(i_idx[k]), int(j_idx[k])], **v.to_dict()})
    onset = max((v.onset for v in verdicts if v.onset is not None), default=None)
    return CheckOutcome("dichotomy-pairs", _status(not bad), None,
                        {"pairs": len(verdicts), "bad": len(bad), "T_star": onset},
                        {"branches": counts, "counterexamples": bad[:10], "theta": theta.angles},
                        f"{len(bad)} pairs left the expected branch" if bad else "")


def dichotomy_decay(system, opt, rng) -> CheckOutcome:
    cc, sp, params = _ledger(system, opt, rng)
    n0 = params.N0
    if n0 >= cc.n:
        raise ValueError("the cone family covers the whole space; no decaying bundle to test")
    q = np.eye(cc.n) - sp[n0].P
    u0 = q @ rng.standard_normal(cc.n)
    u0 /= np.linalg.norm(u0)
    t_grid = np.linspace(0.0, opt.span, opt.points)
    diffs = np.array([cc.step(0.0, float(t)) @ u0 for t in t_grid])
    verdict = dichotomy_check(t_grid, diffs, SplittingConeFamily(sp, params), math.log(params.lambda0))
    real = np.sort(np.linalg.eigvals(cc.matrix).real)[::-1]
    expected = float(real[n0])
    ok = verdict.branch == "decay" and verdict.rate is not None and math.isfinite(verdict.rate) \
        and abs(verdict.rate - expected) <= opt.rate_tol * abs(expected)
    margin = None
    if verdict.rate is not None and math.isfinite(verdict.rate):
        margin = 1.0 - abs(verdict.rate - expected) / (opt.rate_tol * abs(expected))
    return CheckOutcome("dichotomy-decay", _status(ok), margin,
                        {"rate": verdict.rate, "expected_rate": expected, "N0": n0},
                        {"verdict": verdict.to_dict(), "lambda0": params.lambda0})


# -- omega-limit structure --


def _cloud_rows(horizon, clouds) -> list:
    rows = []
    for j, fib in enumerate(clouds.fibers):
        for t, p in zip(fib.times, fib.points):
            row = {"horizon": horizon, "theta_id": j, "t": float(t), "s": float(p[0])}
            row.update({f"x_{i + 1}": float(v) for i, v in enumerate(p)})
            rows.append(row)
    return rows


def omega_capture(system, opt, rng) -> CheckOutcome:
    spec = build_tridiag(system)
    if len(opt.x0) != spec.n:
        raise ValueError(f"x0 has {len(opt.x0)} components, system has {spec.n}")
    theta0 = TorusPoint.zero(spec.rotation.m)
    x0 = np.array(opt.x0, dtype=float)
    full = integrate(spec, theta0, x0, (0.0, opt.horizons[-1]), tol=opt.tol, dense=True)
    views = []
    for h in opt.horizons:
        view = Orbit(np.array([0.0, h]), np.stack([x0, np.asarray(full.dense(h)).reshape(spec.n)]), theta0,
                     spec.rotation)
        view.dense = full.dense
        views.append(view)
    refs, skipped = sample_references(spec, views[0], opt.references, rng, opt.transient_cut, opt.eta, opt.realign)
    per, rows, problems = [], [], []
    for h, view in zip(opt.horizons, views):
        clouds = capture_omega(spec, view, refs, opt.transient_cut, opt.eta, opt.realign, opt.tol)
        clouds.skipped_references = skipped
        rep = classify_trichotomy(clouds, opt.cluster_radius)
        cov = almost_one_cover_test(clouds, opt.diameter_tol)
        per.append({"horizon": h, "classification": rep.classification, "minimal_count": rep.minimal_count,
                    **cov.to_dict(), "report": rep.to_dict()})
        rows.extend(_cloud_rows(h, clouds))
        if rep.classification != INCONCLUSIVE and rep.minimal_count > 2:
            problems.append(f"horizon {h:g}: {rep.minimal_count} minimal sets")
    first = per[0]
    if first["classification"] != SINGLE:
        problems.append(f"classification {first['classification']} at horizon {first['horizon']:g}")
    if first["fraction_single"] < opt.min_fraction:
        problems.append(f"fraction_single {first['fraction_single']:.3f} < {opt.min_fraction}")
    fr = [p["fraction_single"] for p in per]
    if any(b < a for a, b in zip(fr, fr[1:])):
        problems.append(f"fraction_single decreased with horizon: {fr}")
    headline = {"classification": first["classification"], "fraction_single": fr[0],
                "fraction_single_last": fr[-1], "max_fiber_diameter": max(p["max_fiber_diameter"] for p in per)}
    margin = min(fr) - opt.min_fraction
    return CheckOutcome("omega-capture", _status(not problems), margin, headline,
                        {"horizons": per, "references": [r.angles for r in refs]}, "; ".join(problems),
                        {"clouds": rows})


# -- parabolic problems --


def nonlocal_bound(system, opt, rng) -> CheckOutcome:
    spec = build_parabolic(system)
    m_star = dissipativity_bounds(spec).M_star
    u0 = _smooth_starts(spec, opt.starts, rng, m_star, 3.0 * m_star)
    angles = rng.uniform(0, TWO_PI, size=(spec.rotation.m, opt.starts))
    t_eval = np.linspace(opt.T, 2.0 * opt.T, opt.points)
    orbit = run_parabolic(spec, angles, u0, (0.0, 2.0 * opt.T), t_eval=np.concatenate([[0.0], t_eval]), tol=opt.tol)
    sup = float(np.max(np.abs(orbit.states[1:])))
    bound = m_star + opt.slack
    return CheckOutcome("nonlocal-bound", _status(sup <= bound), bound - sup,
                        {"sup_tail": sup, "M_star": m_star, "bound": bound},
                        {"T": opt.T, "starts": opt.starts, "max_initial": float(np.max(np.abs(u0)))})


def chemotaxis_bound(system, opt, rng) -> CheckOutcome:
    spec = build_parabolic(system)
    u0 = _smooth_starts(spec, opt.starts, rng, 0.1, 3.0)
    angles = rng.uniform(0, TWO_PI, size=(spec.rotation.m, opt.starts))
    t_eval = np.linspace(0.0, opt.horizon, opt.points)
    orbit = run_parabolic(spec, angles, u0, (0.0, opt.horizon), t_eval=t_eval, tol=opt.tol)
    diag = chemotaxis_diagnostics(spec, orbit)
    ok = diag.max_ratio <= CHEMO_C and diag.max_residual <= opt.residual_tol
    return CheckOutcome("chemotaxis-bound", _status(ok), CHEMO_C - diag.max_ratio,
                        {"max_ratio": diag.max_ratio, "C": CHEMO_C, "max_residual": diag.max_residual},
                        {"instants": int(diag.ratios.size), "bounds": dissipativity_bounds(spec).to_dict()})


def heat(system, opt, rng) -> CheckOutcome:
    ns = tuple(system.N * 2**k for k in range(opt.doublings + 1))
    r = heat_convergence(ns, opt.t, system.bc)
    dev = [abs(q - opt.ratio) for q in r["ratios"]]
    ok = all(d <= opt.ratio_tol for d in dev)
    margin = 1.0 - max(dev) / opt.ratio_tol if dev else None
    rows = [{"N": n, "error": e} for n, e in zip(r["N"], r["errors"])]
    return CheckOutcome("heat-convergence", _status(ok), margin,
                        {"error": r["errors"][0], "min_ratio": min(r["ratios"], default=None),
                         "max_ratio": max(r["ratios"], default=None)}, r, "", {"errors": rows})


def zero_number(system, opt, rng) -> CheckOutcome:
    spec = build_parabolic(system)
    u1 = _smooth_starts(spec, opt.runs, rng, 0.1, opt.amplitude)
    u2 = _smooth_starts(spec, opt.runs, rng, 0.1, opt.amplitude)
    angles = rng.uniform(0, TWO_PI, size=(spec.rotation.m, opt.runs))
    t_eval = np.linspace(0.0, opt.horizon, opt.points)
    path = linearized_parabolic(spec, (u1, u2), t_eval, theta=angles, tol=opt.tol)
    z, simple = path.zero_numbers()
    violations = []
    for b in range(opt.runs):
        last = None
        for k in range(len(t_eval)):
            if not simple[k, b]:
                continue
            if last is not None and z[k, b] > last:
                violations.append({"run": b, "t": float(t_eval[k]), "from": int(last), "to": int(z[k, b])})
            last = z[k, b]
    err = float(np.max(path.difference_error()))
    return CheckOutcome("zero-number", _status(not violations), None,
                        {"violations": len(violations), "regular_fraction": float(np.mean(simple)),
                         "difference_error": err},
                        {"N": spec.N, "initial_Z": z[0].tolist(), "final_Z": z[-1].tolist(),
                         "violations": violations[:10]})


CHECKS = {
    "difference-identity": difference_identity,
    "sigma-monotonicity": sigma_monotone,
    "axiom-battery": battery,
    "dissipative-box": dissipative_box,
    "splitting-oracle": splitting_oracle,
    "cone-constants": cone_constants,
    "perturbed-cone": perturbed_cone,
    "eps1-search": eps1_search,
    "dichotomy-pairs": dichotomy_pairs,
    "dichotomy-decay": dichotomy_decay,
    "omega-capture": omega_capture,
    "nonlocal-bound": nonlocal_bound,
    "chemotaxis-bound": chemotaxis_bound,
    "heat-convergence": heat,
    "zero-number": zero_number,
}

if set(CHECKS) != set(CHECK_SYSTEMS):
    raise ImportError("check registry and config schema disagree")

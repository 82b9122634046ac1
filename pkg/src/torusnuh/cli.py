"""Command-line front end.

Subcommands: snf, threshold, preimages, cchi, lyap, solenoid-check, segments,
continuity-scan.  All output is JSON by default (CSV where a table is more
useful), with every stochastic run recording its seed so a replay with the
same configuration is byte-identical.  A JSON config file can provide any
parameter; explicit flags win over the file.

Exit codes: 0 success, 2 precondition or input violation, 3 budget exceeded,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as _scipy_stats

from . import bounds as bounds_mod
from . import cones, estimator, segments as segments_mod, solenoid
from .endo import (
    ORDER_EH,
    ORDER_HE,
    EndoMap,
    PreconditionError,
    canonical_profile,
    standard_family,
)
from .intmat import (
    HomothetyError,
    IntMatrix2,
    SingularMatrixError,
    coset_representatives,
    normalize_position,
    smith_normal_form,
)

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_BUDGET = 3
EXIT_NUMERICAL = 4


# -- plumbing -----------------------------------------------------------------------


def _native(obj):
    """Recursively convert numpy scalars/arrays and tuples for json.dumps."""
    if isinstance(obj, dict):
        return {str(k): _native(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_native(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _native(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _emit(payload: dict, params: dict, csv_rows: Optional[List[Sequence]] = None) -> None:
    """Write the payload as deterministic JSON (sorted keys, no timestamps),
    or as CSV when requested and a table shape is available."""
    fmt = params.get("format") or "json"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        rows = csv_rows if csv_rows is not None else _flatten_rows(_native(payload))
        for row in rows:
            writer.writerow(row)
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps(_native(payload), sort_keys=True, indent=2) + "\n"
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    out = params.get("out")
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _flatten_rows(payload, prefix: str = "") -> List[Tuple[str, str]]:
    rows: List[Tuple[str, str]] = []
    if isinstance(payload, dict):
        for k in sorted(payload):
            rows.extend(_flatten_rows(payload[k], f"{prefix}{k}." if prefix else f"{k}."))
    elif isinstance(payload, list):
        for i, v in enumerate(payload):
            rows.extend(_flatten_rows(v, f"{prefix}{i}."))
    else:
        rows.append((prefix[:-1], json.dumps(payload)))
    return rows


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return cfg


def _params(args: argparse.Namespace, defaults: Dict[str, object]) -> dict:
    """Merge resolution order: hard defaults < config file < explicit flags."""
    cfg = _load_config(getattr(args, "config", None))
    unknown = set(cfg) - set(defaults)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    out = dict(defaults)
    out.update(cfg)
    for key in defaults:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            out[key] = val
    return out


def _parse_matrix(text: str) -> IntMatrix2:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError(f"matrix must be 4 comma-separated integers, got {text!r}")
    a, b, c, d = (int(p) for p in parts)
    return IntMatrix2(a, b, c, d)


def _parse_point(text: str) -> Tuple[float, float]:
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != 2:
        raise ValueError(f"point must be 'x,y', got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_grid(text: str) -> Tuple[int, int, int]:
    parts = [p.strip() for p in str(text).lower().split("x")]
    if len(parts) == 2:
        parts.append("8")
    if len(parts) != 3:
        raise ValueError(f"grid must be 'NXxNY' or 'NXxNYxNDIRS', got {text!r}")
    nx, ny, nd = (int(p) for p in parts)
    if min(nx, ny, nd) < 1:
        raise ValueError(f"grid sizes must be positive, got {text!r}")
    return nx, ny, nd


def _parse_values(text) -> List[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(p) for p in str(text).split(",") if p.strip()]


def _resolve_map(params: dict, order: Optional[str] = None) -> EndoMap:
    """Build the endomorphism for a command, enforcing the structural
    hypotheses (the construction itself raises on violations)."""
    order = order or params.get("order") or ORDER_EH
    t = float(params["t"])
    if params.get("matrix"):
        G = _parse_matrix(params["matrix"])
        alpha = params.get("alpha")
        if alpha is None:
            alpha = cones.search_alpha(G)
            if alpha is None:
                raise PreconditionError(
                    f"no certifiable cone parameter found for matrix {G.flat()}; pass --alpha"
                )
        snf = smith_normal_form(G)
        profile = canonical_profile(snf.tau2)
        return EndoMap(G=G, t=t, profile=profile, alpha=float(alpha), order=order)
    alpha = params.get("alpha")
    return standard_family(k=int(params["k"]), t=t, order=order,
                           alpha=float(alpha) if alpha is not None else 2.0)


def _map_record(f: EndoMap) -> dict:
    return {
        "matrix": [list(r) for r in f.G.rows()],
        "t": f.t,
        "order": f.order,
        "alpha": f.alpha,
        "tau1": f.tau1,
        "tau2": f.tau2,
        "degree": f.degree,
    }


# -- snf ---------------------------------------------------------------------------


def cmd_snf(args: argparse.Namespace) -> int:
    params = _params(args, {"matrix": None, "out": None, "format": None})
    if not params["matrix"]:
        raise ValueError("snf requires --matrix a,b,c,d")
    E = _parse_matrix(params["matrix"])
    snf = smith_normal_form(E)
    payload = {
        "matrix": [list(r) for r in E.rows()],
        "det": E.det,
        "degree": E.degree,
        "tau1": snf.tau1,
        "tau2": snf.tau2,
        "L": [list(r) for r in snf.L.rows()],
        "D": [list(r) for r in snf.D.rows()],
        "R": [list(r) for r in snf.R.rows()],
        "homothety": E.is_homothety,
        "coset_representatives": [list(w) for w in coset_representatives(E)],
    }
    if E.is_homothety:
        payload["normal_position"] = None
    else:
        np_res = normalize_position(E)
        payload["normal_position"] = {
            "P": [list(r) for r in np_res.P.rows()],
            "G": [list(r) for r in np_res.G.rows()],
        }
    _emit(payload, params)
    return EXIT_OK


# -- threshold ---------------------------------------------------------------------


def cmd_threshold(args: argparse.Namespace) -> int:
    params = _params(args, {
        "k": 2, "condition": "nuh", "check": None, "matrix": None,
        "alpha": None, "out": None, "format": None,
    })
    condition = str(params["condition"]).lower()
    check = _parse_values(params["check"]) if params["check"] is not None else None
    if params.get("matrix"):
        G = _parse_matrix(params["matrix"])
        alpha = params.get("alpha")
        if alpha is None:
            alpha = cones.search_alpha(G)
            if alpha is None:
                raise PreconditionError(
                    f"no certifiable cone parameter found for matrix {G.flat()}; pass --alpha"
                )
        snf = smith_normal_form(G)
        prof = canonical_profile(snf.tau2)
        ec = cones.expansion_constants(G, float(alpha))
        inputs = bounds_mod.BoundInputs(
            tau2=snf.tau2, alpha=float(alpha), a=prof.a, b=prof.b,
            e_v=ec.e_v, e_h=ec.e_h,
            t=(2.0 * float(alpha) / prof.a) * 2.0,
        )
        report = bounds_mod.solve_threshold(inputs, condition=condition,
                                            log_det=math.log(G.degree),
                                            check_values=check)
        family: dict = {"matrix": [list(r) for r in G.rows()]}
    else:
        k = int(params["k"])
        report = bounds_mod.solve_threshold(k, condition=condition, check_values=check)
        family = {"k": k}
    payload = {"family": family, "report": report.to_record()}
    payload["inputs"] = (bounds_mod.family_inputs(int(params["k"]), report.minimal_t).__dict__
                         if not params.get("matrix") else None)
    _emit(payload, params)
    return EXIT_OK


# -- preimages ---------------------------------------------------------------------


def _half_cone_pieces(f: EndoMap) -> Tuple[List[Tuple[float, float]], List[Tuple[float, float]]]:
    """Split the horizontal-cone parameter interval [-alpha, alpha] (vectors
    (1, s)) at the sign changes of u1*u2 for u = G^{-1} (1, s): the 'plus'
    pieces (u1*u2 <= 0) are the directions a plus-band preimage sends into the
    vertical cone, the 'minus' pieces (u1*u2 >= 0) belong to minus bands."""
    alpha = f.alpha
    ginv = f._ginv()
    breaks = {-alpha, alpha}
    for c1, c0 in ((ginv[0, 1], ginv[0, 0]), (ginv[1, 1], ginv[1, 0])):
        if c1 != 0.0:
            r = -c0 / c1
            if -alpha < r < alpha:
                breaks.add(float(r))
    pts = sorted(breaks)
    plus: List[Tuple[float, float]] = []
    minus: List[Tuple[float, float]] = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        s_mid = 0.5 * (lo + hi)
        u1 = ginv[0, 0] + ginv[0, 1] * s_mid
        u2 = ginv[1, 0] + ginv[1, 1] * s_mid
        (plus if u1 * u2 <= 0.0 else minus).append((lo, hi))
    return plus, minus


def cmd_preimages(args: argparse.Namespace) -> int:
    params = _params(args, {
        "k": 2, "t": 1.5, "x": "0.594,0.287", "depth": 1, "order": None,
        "alpha": None, "matrix": None, "budget": estimator.DEFAULT_BUDGET,
        "out": None, "format": None,
    })
    f = _resolve_map(params)
    depth = int(params["depth"])
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if f.degree ** depth > int(params["budget"]):
        raise estimator.BudgetError(f.degree ** depth, int(params["budget"]))
    x = np.array(_parse_point(params["x"]))

    pre = f.preimages(x)
    records = []
    invariant_count = 0
    for i in range(f.degree):
        y = pre[i]
        Minv = np.linalg.inv(f.derivative(y))
        margin = cones.vertical_invariance_margin(Minv, f.alpha)
        ok = margin < 0.0
        invariant_count += int(ok)
        records.append({
            "branch": i + 1,
            "point": [float(y[0]), float(y[1])],
            "band": f.classify_region(y),
            "cone_invariant": bool(ok),
            "margin": float(margin),
        })
    payload = {
        "map": _map_record(f),
        "point": [float(x[0]), float(x[1])],
        "preimages": records,
        "counts": {"total": f.degree, "cone_invariant": invariant_count},
    }

    if depth >= 2:
        plus_pieces, minus_pieces = _half_cone_pieces(f)
        second = []
        for rec, y in zip(records, pre):
            if rec["cone_invariant"]:
                continue
            children = []
            n_plus = n_minus = n_neither = 0
            zs = f.preimages(y)
            for j in range(f.degree):
                z = zs[j]
                Minv = np.linalg.inv(f.derivative(z))
                mp = max(cones.sector_into_vertical_margin(Minv, f.alpha, lo, hi)
                         for lo, hi in plus_pieces)
                mm = max(cones.sector_into_vertical_margin(Minv, f.alpha, lo, hi)
                         for lo, hi in minus_pieces)
                plus_in = mp < 0.0
                minus_in = mm < 0.0
                n_plus += int(plus_in)
                n_minus += int(minus_in)
                n_neither += int(not plus_in and not minus_in)
                children.append({
                    "branch": j + 1,
                    "point": [float(z[0]), float(z[1])],
                    "band": f.classify_region(z),
                    "plus_half_in": bool(plus_in),
                    "minus_half_in": bool(minus_in),
                    "margin_plus": float(mp),
                    "margin_minus": float(mm),
                })
            second.append({
                "parent_branch": rec["branch"],
                "children": children,
                "counts": {"plus": n_plus, "minus": n_minus, "neither": n_neither},
            })
        payload["depth2"] = second

    rows = [("branch", "y1", "y2", "band", "cone_invariant", "margin")]
    for r in records:
        rows.append((r["branch"], r["point"][0], r["point"][1], r["band"],
                     int(r["cone_invariant"]), r["margin"]))
    _emit(payload, params, csv_rows=rows)
    return EXIT_OK


# -- cchi --------------------------------------------------------------------------


def cmd_cchi(args: argparse.Namespace) -> int:
    params = _params(args, {
        "k": 2, "t": 1042.0, "depth": 2, "grid": "8x8x8", "order": None,
        "alpha": None, "matrix": None, "budget": estimator.DEFAULT_BUDGET,
        "out": None, "format": None,
    })
    f = _resolve_map(params)
    nx, ny, ndirs = _parse_grid(params["grid"])
    est = estimator.estimate_c_chi(f, n=int(params["depth"]), nx=nx, ny=ny,
                                   ndirs=ndirs, budget=int(params["budget"]))
    log_det = estimator.c_det(f)
    payload = {
        "map": _map_record(f),
        "depth": est.n,
        "grid": list(est.grid),
        "value": est.value,
        "argmin_x": list(est.argmin_x),
        "argmin_v": list(est.argmin_v),
        "c_det": log_det,
        "u1_margin": est.value + 0.5 * log_det,
        "positive_minimum": bool(est.value > 0.0),
    }
    _emit(payload, params)
    return EXIT_OK


# -- lyap --------------------------------------------------------------------------


def _estimate_record(e: solenoid.ExponentEstimate) -> dict:
    return {
        "value": e.value,
        "std_error": e.std_error,
        "ci95": [e.value - 1.96 * e.std_error, e.value + 1.96 * e.std_error],
        "n": e.n,
        "samples": e.samples,
        "seed": e.seed,
        "burn_in": e.burn_in,
        "warnings": list(e.warnings),
    }


def cmd_lyap(args: argparse.Namespace) -> int:
    params = _params(args, {
        "k": 2, "t": 1042.0, "n": 1000, "samples": 10000, "seed": 0,
        "burn_in": None, "order": None, "alpha": None, "matrix": None,
        "budget": estimator.DEFAULT_BUDGET, "out": None, "format": None,
    })
    f = _resolve_map(params)
    burn = params["burn_in"]
    chi_plus, chi_minus = solenoid.estimate_exponents(
        f, n=int(params["n"]), samples=int(params["samples"]),
        seed=int(params["seed"]),
        burn_in=int(burn) if burn is not None else None,
        budget=int(params["budget"]),
    )
    pair_sum = chi_plus.value + chi_minus.value
    pair_se = math.hypot(chi_plus.std_error, chi_minus.std_error)
    payload = {
        "map": _map_record(f),
        "chi_plus": _estimate_record(chi_plus),
        "chi_minus": _estimate_record(chi_minus),
        "pairing": {
            "sum": pair_sum,
            "log_degree": f.log_det,
            "gap": pair_sum - f.log_det,
            "combined_std_error": pair_se,
            "within_3se": bool(abs(pair_sum - f.log_det) <= 3.0 * pair_se),
        },
    }
    _emit(payload, params)
    return EXIT_OK


# -- solenoid-check ----------------------------------------------------------------


def cmd_solenoid_check(args: argparse.Namespace) -> int:
    params = _params(args, {
        "k": 2, "t": 1.5, "seed": 0, "trials": 50, "word_depth": 8,
        "cylinder_depth": 3, "chi2_draws": 20000, "order": None, "alpha": None,
        "matrix": None, "budget": estimator.DEFAULT_BUDGET, "out": None,
        "format": None,
    })
    f = _resolve_map(params)
    rng = np.random.Generator(np.random.Philox(key=int(params["seed"])))
    d = f.degree
    depth = int(params["word_depth"])
    trials = int(params["trials"])
    checks = []

    def record(name: str, passed: bool, detail: dict) -> None:
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    # identity: v = 0 fixes every word with zero carries
    worst = 0
    for _ in range(trials):
        word = solenoid.SymbolWord(
            tuple(int(s) for s in rng.integers(1, d + 1, size=depth)), d)
        state = solenoid.psi(f, (0, 0), word)
        if state.taus.symbols != word.symbols or any(c != (0, 0) for c in state.carries):
            worst += 1
    record("psi_identity", worst == 0, {"trials": trials, "failures": worst})

    # group law: psi_{v+w} = psi_w o psi_v
    failures = 0
    for _ in range(trials):
        word = solenoid.SymbolWord(
            tuple(int(s) for s in rng.integers(1, d + 1, size=depth)), d)
        v = tuple(int(c) for c in rng.integers(-6, 7, size=2))
        w = tuple(int(c) for c in rng.integers(-6, 7, size=2))
        via = solenoid.psi(f, w, solenoid.psi(f, v, word).taus)
        direct = solenoid.psi(f, (v[0] + w[0], v[1] + w[1]), word)
        if via.taus.symbols != direct.taus.symbols:
            failures += 1
    record("psi_group_law", failures == 0, {"trials": trials, "failures": failures})

    # plane difference identity: F_tau...(x~+v) - F_omega...(x~) = final carry
    worst_err = 0.0
    for _ in range(trials):
        word = solenoid.SymbolWord(
            tuple(int(s) for s in rng.integers(1, d + 1, size=depth)), d)
        v = tuple(int(c) for c in rng.integers(-6, 7, size=2))
        x_tilde = rng.random(2)
        state = solenoid.psi(f, v, word)
        left = solenoid.plane_backward(f, x_tilde + np.array(v, dtype=float), state.taus)[-1]
        right = solenoid.plane_backward(f, x_tilde, word)[-1]
        err = float(np.max(np.abs(left - right - np.array(state.final_carry, dtype=float))))
        worst_err = max(worst_err, err)
    record("plane_difference_identity", worst_err <= 1e-9,
           {"trials": trials, "worst_error": worst_err})

    # cylinder measures: normalization and refinement consistency
    x_tilde = rng.random(2)
    cyl_depth = int(params["cylinder_depth"])
    sums = []
    prev = None
    refine_err = 0.0
    for nn in range(1, cyl_depth + 1):
        M = solenoid.enumerate_cylinder_measures(f, x_tilde, nn,
                                                 budget=int(params["budget"]))
        sums.append(float(M.sum()))
        if prev is not None:
            refine_err = max(refine_err, float(np.max(np.abs(
                M.reshape(-1, d).sum(axis=1) - prev))))
        prev = M
    sum_err = max(abs(s - 1.0) for s in sums)
    record("cylinder_normalization", sum_err <= 1e-9,
           {"depths": list(range(1, cyl_depth + 1)), "sums": sums, "worst_error": sum_err})
    record("cylinder_refinement", refine_err <= 1e-9, {"worst_error": refine_err})

    # sampled words reproduce depth-2 cylinder frequencies (chi^2 at 4 sigma)
    draws = int(params["chi2_draws"])
    if draws > int(params["budget"]):
        raise estimator.BudgetError(draws, int(params["budget"]))
    words = solenoid.sample_backward_words(f, x_tilde, 2, draws, int(params["seed"]) + 1)
    idx = (words[:, 0] - 1) * d + (words[:, 1] - 1)
    counts = np.bincount(idx, minlength=d * d)
    expected = solenoid.enumerate_cylinder_measures(f, x_tilde, 2) * draws
    chi2_stat = float(np.sum((counts - expected) ** 2 / expected))
    dof = d * d - 1
    threshold = float(_scipy_stats.chi2.ppf(1.0 - _scipy_stats.norm.sf(4.0), dof))
    record("cylinder_sampling_chi2", chi2_stat <= threshold,
           {"draws": draws, "statistic": chi2_stat, "dof": dof, "threshold": threshold})

    # sampled orbits satisfy f(x_{i+1}) = x_i (asserted inside the sampler)
    orbit = solenoid.sample_backward_orbit(f, rng.random(2), 64, int(params["seed"]) + 2)
    fwd = f.evaluate(orbit.points[1:])
    orbit_err = float(np.max(solenoid.torus_dist(fwd, orbit.points[:-1]))) if len(
        orbit.points) > 1 else 0.0
    record("backward_orbit_consistency", orbit_err <= 1e-9, {"n": 64, "worst_error": orbit_err})

    ok = all(c["passed"] for c in checks)
    payload = {
        "map": _map_record(f),
        "seed": int(params["seed"]),
        "checks": checks,
        "ok": ok,
    }
    _emit(payload, params)
    if not ok:
        return EXIT_NUMERICAL
    return EXIT_OK


# -- segments ----------------------------------------------------------------------


def _segments_experiment(f: EndoMap, spec: segments_mod.VSegmentSpec,
                         n_segments: int, n_curves: int, max_steps: int,
                         seed: int) -> dict:
    rng = np.random.Generator(np.random.Philox(key=seed))
    contained = 0
    first_failure = None
    for i in range(n_segments):
        seg = segments_mod.random_v_segment(spec, rng)
        hit = None
        for branch in range(1, f.degree + 1):
            q = segments_mod.pullback_curve(f, seg, branch)
            if segments_mod.find_v_subsegment(q, spec) is not None:
                hit = branch
                break
        if hit is not None:
            contained += 1
        elif first_failure is None:
            first_failure = i
    reached = 0
    steps_used = []
    for i in range(n_curves):
        curve = segments_mod.random_curve(rng)
        res = segments_mod.guided_search(f, curve, spec, max_steps=max_steps)
        if res.found:
            reached += 1
            steps_used.append(res.steps)
    return {
        "order": f.order,
        "t": f.t,
        "segments_total": n_segments,
        "segments_with_v_subsegment": contained,
        "all_contained": contained == n_segments,
        "first_failure_index": first_failure,
        "curves_total": n_curves,
        "curves_reaching_v_segment": reached,
        "all_curves_reached": reached == n_curves,
        "max_steps": max_steps,
        "steps_used": steps_used,
    }


def cmd_segments(args: argparse.Namespace) -> int:
    params = _params(args, {
        "k": 2, "t": 43.0, "order": "both", "alpha": None, "matrix": None,
        "n_segments": 100, "n_curves": 20, "max_steps": 50, "seed": 0,
        "dump": None, "out": None, "format": None,
    })
    order = str(params["order"])
    orders = [ORDER_EH, ORDER_HE] if order == "both" else [order]
    results = []
    spec = None
    thr = None
    for o in orders:
        f = _resolve_map(params, order=o)
        consts = cones.expansion_constants(f.G, f.alpha)
        spec = segments_mod.VSegmentSpec.from_constants(f.alpha, consts.e_v)
        inp = bounds_mod.BoundInputs(tau2=f.tau2, alpha=f.alpha, a=f.profile.a,
                                     b=f.profile.b, e_v=consts.e_v, e_h=consts.e_h,
                                     t=f.t)
        thr = bounds_mod.segment_threshold(inp)
        res = _segments_experiment(f, spec, int(params["n_segments"]),
                                   int(params["n_curves"]), int(params["max_steps"]),
                                   int(params["seed"]))
        res["segment_threshold"] = thr
        res["above_threshold"] = bool(f.t > thr)
        results.append(res)
    payload = {
        "reference_length": spec.l if spec else None,
        "seed": int(params["seed"]),
        "results": results,
    }
    if params.get("dump"):
        f = _resolve_map(params, order=orders[0])
        rng = np.random.Generator(np.random.Philox(key=int(params["seed"])))
        curve = segments_mod.random_curve(rng)
        res = segments_mod.guided_search(f, curve, spec, max_steps=int(params["max_steps"]))
        target = res.segment if res.found else curve
        with open(params["dump"], "w") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("x1", "x2"))
            for v in target.vertices:
                writer.writerow((repr(float(v[0])), repr(float(v[1]))))
        payload["dump"] = params["dump"]
    _emit(payload, params)
    return EXIT_OK


# -- continuity scan ---------------------------------------------------------------


def cmd_continuity_scan(args: argparse.Namespace) -> int:
    params = _params(args, {
        "k": 2, "t_values": "10.02,11,12,13,14,15,16,17,18,19,20",
        "n": 1000, "samples": 2000, "seed": 0, "order": None, "alpha": None,
        "matrix": None, "budget": estimator.DEFAULT_BUDGET, "out": None,
        "format": None,
    })
    ts = _parse_values(params["t_values"])
    if len(ts) < 3:
        raise ValueError("continuity scan needs at least 3 strength values")
    points = []
    for t in ts:
        run = dict(params)
        run["t"] = t
        f = _resolve_map(run)
        chi_plus, chi_minus = solenoid.estimate_exponents(
            f, n=int(params["n"]), samples=int(params["samples"]),
            seed=int(params["seed"]), budget=int(params["budget"]))
        points.append({
            "t": float(t),
            "chi_minus": chi_minus.value,
            "chi_minus_se": chi_minus.std_error,
            "chi_plus": chi_plus.value,
            "chi_plus_se": chi_plus.std_error,
        })

    logs = np.log([p["t"] for p in points])
    vals = np.array([p["chi_minus"] for p in points])
    A = np.stack([np.ones_like(logs), logs], axis=1)
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    resid = vals - A @ coef
    resid_std = float(np.std(resid, ddof=2)) if len(ts) > 2 else 0.0
    lam = float(coef[1])

    increments = []
    all_ok = True
    for p0, p1 in zip(points[:-1], points[1:]):
        delta = abs(p1["chi_minus"] - p0["chi_minus"])
        allowed = (abs(lam) * abs(math.log(p1["t"]) - math.log(p0["t"]))
                   + 3.0 * (p0["chi_minus_se"] + p1["chi_minus_se"] + resid_std))
        ok = delta <= allowed
        all_ok &= ok
        increments.append({
            "from_t": p0["t"], "to_t": p1["t"],
            "delta": delta, "allowed": allowed, "ok": bool(ok),
        })
    payload = {
        "k": int(params["k"]),
        "seed": int(params["seed"]),
        "n": int(params["n"]),
        "samples": int(params["samples"]),
        "points": points,
        "fit": {"lambda_log_t": lam, "intercept": float(coef[0]),
                "residual_std": resid_std},
        "increments": increments,
        "all_ok": bool(all_ok),
        "note": (
            "empirical continuity scan: exponent increments are compared "
            "against a Lipschitz-in-log-t envelope fitted from the same data "
            "plus three combined standard errors; a statistical consistency "
            "check, not a proof of continuity"
        ),
    }
    rows = [("t", "chi_minus", "chi_minus_se", "chi_plus", "chi_plus_se")]
    for p in points:
        rows.append((p["t"], p["chi_minus"], p["chi_minus_se"],
                     p["chi_plus"], p["chi_plus_se"]))
    _emit(payload, params, csv_rows=rows)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def _add_common(sp: argparse.ArgumentParser, map_flags: bool = True,
                seeded: bool = False) -> None:
    sp.add_argument("--config", help="JSON config file; explicit flags win")
    sp.add_argument("--out", help="output file (default: stdout)")
    sp.add_argument("--format", choices=("json", "csv"), help="output format (default json)")
    if map_flags:
        sp.add_argument("--k", type=int, help="built-in family parameter (k >= 2)")
        sp.add_argument("--t", type=float, help="shear strength")
        sp.add_argument("--matrix", help="explicit linear part a,b,c,d (normal position)")
        sp.add_argument("--alpha", type=float, help="cone parameter (default 2 / searched)")
        sp.add_argument("--order", choices=(ORDER_EH, ORDER_HE), help="composition order")
        sp.add_argument("--budget", type=int, help="branch/evaluation budget")
    if seeded:
        sp.add_argument("--seed", type=int, help="RNG seed (recorded in output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="torusnuh",
        description="Shear-deformed torus endomorphisms: cone certificates, "
                    "pullback averages, exponent estimates, and curve experiments.",
    )
    sub = parser.add_subparsers(dest="command")

    sp = sub.add_parser("snf", help="Smith normal form and normal position of an integer matrix")
    sp.add_argument("--matrix", help="entries a,b,c,d")
    _add_common(sp, map_flags=False)
    sp.set_defaults(func=cmd_snf)

    sp = sub.add_parser("threshold", help="certificate threshold report")
    sp.add_argument("--condition", choices=("nuh", "u1"))
    sp.add_argument("--check", help="comma-separated strengths to test")
    sp.add_argument("--k", type=int, help="built-in family parameter")
    sp.add_argument("--matrix", help="explicit linear part a,b,c,d")
    sp.add_argument("--alpha", type=float)
    _add_common(sp, map_flags=False)
    sp.set_defaults(func=cmd_threshold)

    sp = sub.add_parser("preimages", help="preimage fan with cone classifications (figure data)")
    sp.add_argument("--x", help="base point 'x1,x2'")
    sp.add_argument("--depth", type=int, help="1 = preimages, 2 = add half-cone analysis")
    _add_common(sp, seeded=False)
    sp.set_defaults(func=cmd_preimages)

    sp = sub.add_parser("cchi", help="grid estimate of the uniform pullback-average rate")
    sp.add_argument("--depth", type=int, help="tree depth n")
    sp.add_argument("--grid", help="NXxNYxNDIRS (default 8x8x8)")
    _add_common(sp)
    sp.set_defaults(func=cmd_cchi)

    sp = sub.add_parser("lyap", help="Monte-Carlo Lyapunov exponent estimates")
    sp.add_argument("--n", type=int, help="orbit length")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--burn-in", type=int, dest="burn_in")
    _add_common(sp, seeded=True)
    sp.set_defaults(func=cmd_lyap)

    sp = sub.add_parser("solenoid-check", help="coding/cylinder/sampling verification suite")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--word-depth", type=int, dest="word_depth")
    sp.add_argument("--cylinder-depth", type=int, dest="cylinder_depth")
    sp.add_argument("--chi2-draws", type=int, dest="chi2_draws")
    _add_common(sp, seeded=True)
    sp.set_defaults(func=cmd_solenoid_check)

    sp = sub.add_parser("segments", help="v-segment pullback and guided-search experiments")
    sp.add_argument("--n-segments", type=int, dest="n_segments")
    sp.add_argument("--n-curves", type=int, dest="n_curves")
    sp.add_argument("--max-steps", type=int, dest="max_steps")
    sp.add_argument("--dump", help="CSV vertex dump of one found v-segment")
    _add_common(sp, seeded=True)
    # segments accepts order=both on top of EH/HE
    for action in sp._actions:
        if action.dest == "order":
            action.choices = (ORDER_EH, ORDER_HE, "both")
    sp.set_defaults(func=cmd_segments)

    sp = sub.add_parser("continuity-scan",
                        help="empirical exponent continuity scan across strengths")
    sp.add_argument("--t-values", dest="t_values", help="comma-separated strengths")
    sp.add_argument("--n", type=int)
    sp.add_argument("--samples", type=int)
    _add_common(sp, seeded=True)
    sp.set_defaults(func=cmd_continuity_scan)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help()
        return EXIT_PRECONDITION
    try:
        return args.func(args)
    except estimator.BudgetError as exc:
        _error(exc)
        return EXIT_BUDGET
    except np.linalg.LinAlgError as exc:
        _error(exc)
        return EXIT_NUMERICAL
    except (PreconditionError, HomothetyError, SingularMatrixError) as exc:
        _error(exc)
        return EXIT_PRECONDITION
    except (ValueError, OSError) as exc:
        _error(exc)
        return EXIT_PRECONDITION
    except (ArithmeticError, AssertionError) as exc:
        _error(exc)
        return EXIT_NUMERICAL


def _error(exc: Exception) -> None:
    sys.stderr.write(json.dumps(
        {"error": {"type": type(exc).__name__, "message": str(exc)}},
        sort_keys=True) + "\n")


if __name__ == "__main__":
    sys.exit(main())

"""Batch driver: run studies, identity suites, and diagnostics from scenario files.

Exit codes: 0 success, 1 input/validation error, 2 quantitative finding
(bound violation or failed exact check; reports are still written).
All outputs are deterministic for a fixed scenario and seed: CSV uses '.'
decimals and LF line endings, JSON is emitted with sorted keys, and every
file carries a header with the scenario hash and tool version.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bl_metric import (
    FunctionWitness,
    LipschitzWitness,
    bl_distance,
    build_envelope_metric,
    dirac_distance_exact,
)
from .diagnostics import (
    EquicontinuityProbe,
    equicontinuity_modulus,
    feller_continuity_check,
    limit_semigroup_check,
    perturb_measure,
    stochastic_continuity_check,
    tightness_probe,
)
from .identities import run_identity_suite
from .measures import PositiveMeasure, SignedMeasure, StateSpace
from .operators import at_time, semigroup_from_json
from .splitting import (
    SplittingStudy,
    commutator_modulus,
    dyadic_cauchy_bounds,
    dyadic_sequence,
    estimate_limit,
    extended_commutator_constant,
    refinement_bound_check,
    sample_scheme_family,
    swap_order_limit_distance,
)


class ScenarioError(ValueError):
    pass


def _apply_thread_cap():
    cap = os.environ.get("TROTTERKIT_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def load_scenario(path):
    """Parse and validate a scenario file; raises ScenarioError on bad input."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario: {exc}")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}")
    if doc.get("schemaVersion") != 1:
        raise ScenarioError(f"{path}: unsupported schemaVersion {doc.get('schemaVersion')!r}")
    try:
        space_spec = doc["space"]
        if space_spec["kind"] == "finite":
            space = StateSpace.finite(np.asarray(space_spec["dist"], dtype=float))
        elif space_spec["kind"] == "euclidean":
            space = StateSpace.euclidean(int(space_spec["dim"]))
        else:
            raise ScenarioError(f"{path}: unknown space kind {space_spec['kind']!r}")
        g1 = semigroup_from_json(space, doc["g1"])
        g2 = semigroup_from_json(space, doc["g2"])
        mu0 = PositiveMeasure.from_atoms(
            space, [(a["point"], float(a["weight"])) for a in doc["mu0"]["atoms"]])
        study = doc["study"]
        sched_spec = study["schedule"]
        if "dyadic" in sched_spec:
            schedule = tuple(2 ** j for j in range(int(sched_spec["dyadic"]) + 1))
        elif "linear" in sched_spec:
            schedule = tuple(range(1, int(sched_spec["linear"]) + 1))
        else:
            raise ScenarioError(f"{path}: schedule needs 'dyadic' or 'linear'")
        if not schedule:
            raise ScenarioError(f"{path}: empty schedule")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{path}: invalid scenario: {exc}")
    return {
        "name": doc.get("name", Path(path).stem),
        "hash": hashlib.sha256(raw).hexdigest()[:16],
        "space": space, "g1": g1, "g2": g2, "mu0": mu0,
        "t": float(study["t"]),
        "schedule": schedule,
        "order": study.get("order", "g1_first"),
        "metric": study.get("metric", "base"),
        "witness_specs": doc.get("witnesses", []),
        "dyadic": "dyadic" in sched_spec,
    }


def build_witnesses(space: StateSpace, specs, rng):
    """Unit-BL-ball witnesses from scenario specs.

    Finite spaces get value tables with exactly certified bounds; Euclidean
    spaces get closed-form functions with known bounds.
    """
    out = []
    for spec in specs:
        kind = spec["kind"]
        if space.kind == "finite":
            if kind == "random":
                for _ in range(int(spec.get("count", 1))):
                    out.append(_finite_witness(space, rng.uniform(-1.0, 1.0, space.size)))
            elif kind == "coordinate":
                v = np.zeros(space.size)
                v[int(spec["index"])] = 1.0
                out.append(_finite_witness(space, v))
            elif kind == "indicator":
                v = np.zeros(space.size)
                v[list(map(int, spec["subset"]))] = 1.0
                out.append(_finite_witness(space, v))
            else:
                raise ScenarioError(f"unknown witness kind {kind!r}")
        else:
            if kind == "coordinate":
                i = int(spec["index"])
                # tanh keeps sup = lip = 1; scale to the unit BL ball
                out.append(FunctionWitness(
                    fn=lambda x, _i=i: 0.5 * np.tanh(x[_i]),
                    sup_bound=0.5, lip_bound=0.5, label=f"coordinate_{i}"))
            elif kind == "indicator":
                c = np.asarray(spec["center"], dtype=float)
                r = float(spec["radius"])
                out.append(FunctionWitness(
                    fn=lambda x, _c=c, _r=r: (_r / (1.0 + _r)) * max(
                        0.0, 1.0 - float(np.linalg.norm(x - _c)) / _r),
                    sup_bound=r / (1.0 + r), lip_bound=1.0 / (1.0 + r),
                    label="smoothed_indicator"))
            elif kind == "random":
                for _ in range(int(spec.get("count", 1))):
                    w = rng.normal(size=space.dim)
                    w /= np.linalg.norm(w)
                    out.append(FunctionWitness(
                        fn=lambda x, _w=w: 0.5 * np.tanh(float(_w @ x)),
                        sup_bound=0.5, lip_bound=0.5, label="random_direction"))
            else:
                raise ScenarioError(f"unknown witness kind {kind!r}")
    return out


def _finite_witness(space: StateSpace, values: np.ndarray) -> LipschitzWitness:
    values = np.asarray(values, dtype=float)
    sup = float(np.max(np.abs(values))) if values.size else 0.0
    lip = 0.0
    for i in range(space.size):
        for j in range(i + 1, space.size):
            lip = max(lip, abs(values[i] - values[j]) / space.dist[i, j])
    norm = sup + lip
    if norm > 0.0:
        values, sup, lip = values / norm, sup / norm, lip / norm
    return LipschitzWitness(points=tuple(range(space.size)), values=values,
                            sup_bound=sup, lip_bound=lip)


def _fmt(x) -> str:
    return repr(float(x))


def _header(scn, seed) -> str:
    return "# " + json.dumps(
        {"scenario": scn["name"], "scenarioHash": scn["hash"],
         "toolVersion": __version__, "seed": seed}, sort_keys=True) + "\n"


def _write_csv(path: Path, header: str, columns, rows):
    buf = io.StringIO()
    buf.write(header)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    path.write_text(buf.getvalue())


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def run_study(scenario_path, out_dir, seed, overrides=None) -> int:
    scn = load_scenario(scenario_path)
    overrides = overrides or {}
    if overrides.get("t") is not None:
        scn["t"] = float(overrides["t"])
    if overrides.get("dyadic") is not None:
        scn["schedule"] = tuple(2 ** j for j in range(int(overrides["dyadic"]) + 1))
        scn["dyadic"] = True
    elif overrides.get("linear") is not None:
        scn["schedule"] = tuple(range(1, int(overrides["linear"]) + 1))
        scn["dyadic"] = False
    if overrides.get("order") is not None:
        scn["order"] = {"12": "g1_first", "21": "g2_first"}[overrides["order"]]
    if overrides.get("metric") is not None:
        scn["metric"] = overrides["metric"]

    rng = np.random.default_rng(seed)
    space, g1, g2, mu0, t = scn["space"], scn["g1"], scn["g2"], scn["mu0"], scn["t"]
    witnesses = build_witnesses(space, scn["witness_specs"], rng)
    metric = space
    if scn["metric"] == "envelope":
        metric = build_envelope_metric(space, witnesses)

    study = SplittingStudy(g1=g1, g2=g2, mu0=mu0, t=t, schedule=scn["schedule"],
                           order=scn["order"], metric=metric)
    _, report = estimate_limit(study)

    max_n = scn["schedule"][-1]
    depth = max(12, int(np.ceil(np.log2(max_n))) + 2)
    t_grid = [t / 2 ** j for j in range(depth + 1)]
    omega = commutator_modulus(g1, g2, mu0, t_grid, metric)

    family = sample_scheme_family(g1, g2, t / max_n, 5, rng, scn["order"])
    c_hat, c_flags = extended_commutator_constant(g1, g2, mu0, t_grid, family, metric)

    violations = []
    bound_rows = []
    pairs = [(n, k) for n in (1, 2, 4, 8) for k in (2, 3, 4)]
    for wi, f in enumerate(witnesses):
        checks = refinement_bound_check(g1, g2, mu0, f, t, pairs, c_hat, omega,
                                        scn["order"])
        for (n, k), (lhs, rhs) in zip(pairs, checks):
            bound_rows.append((wi, n, k, lhs, rhs))
            if lhs > rhs + 1e-12:
                violations.append({"kind": "refinement", "witness": wi,
                                   "n": n, "k": k, "lhs": lhs, "rhs": rhs})

    cauchy_rows = []
    if scn["dyadic"]:
        for wi, f in enumerate(witnesses):
            rs = dyadic_sequence(study, f)
            for i, j, lhs, rhs in dyadic_cauchy_bounds(rs, t, c_hat, omega):
                cauchy_rows.append((wi, i, j, lhs, rhs))
                if lhs > rhs + 1e-12:
                    violations.append({"kind": "dyadic_cauchy", "witness": wi,
                                       "i": i, "j": j, "lhs": lhs, "rhs": rhs})

    swap = swap_order_limit_distance(study)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = _header(scn, seed)

    k2 = {(n, k): (lhs, rhs) for wi, n, k, lhs, rhs in bound_rows if wi == 0 and k == 2}
    report_rows = []
    for n, d in zip(report.schedule, report.distances):
        lhs_k2, rhs_k2 = k2.get((n, 2), (float("nan"), float("nan")))
        report_rows.append((n, d, lhs_k2, rhs_k2,
                            report.fitted_rate if report.fitted_rate is not None
                            else float("nan")))
    _write_csv(out / "report.csv", header,
               ["n", "distance", "lhs_k2", "rhs_k2", "rate"], report_rows)
    _write_csv(out / "modulus.csv", header, ["t", "omega", "envelope"],
               list(zip(omega.t_grid.tolist(), omega.values.tolist(),
                        omega.monotone_envelope.tolist())))
    _write_csv(out / "bounds.csv", header,
               ["check", "witness", "a", "b", "lhs", "rhs"],
               [("refinement", wi, n, k, lhs, rhs) for wi, n, k, lhs, rhs in bound_rows]
               + [("dyadic_cauchy", wi, i, j, lhs, rhs)
                  for wi, i, j, lhs, rhs in cauchy_rows])
    _write_json(out / "summary.json", {
        "scenario": scn["name"], "scenarioHash": scn["hash"],
        "toolVersion": __version__, "seed": seed,
        "fittedRate": report.fitted_rate, "rateSaturated": report.rate_saturated,
        "referenceKind": report.reference_kind,
        "diniIntegral": omega.dini_integral, "C_hat": c_hat,
        "C_hat_flags": c_flags, "swapDistance": swap,
        "familySampleSize": len(family), "witnessCount": len(witnesses),
        "metric": scn["metric"], "order": scn["order"],
        "violations": violations,
    })
    return 2 if violations else 0


def run_identities(seed, trials, max_states, out_path) -> int:
    results, failures = run_identity_suite(seed, trials, max_states)
    payload = {
        "toolVersion": __version__, "seed": seed, "trials": trials,
        "maxStates": max_states,
        "results": [r.to_json_dict() for r in results],
        "failures": failures,
    }
    _write_json(Path(out_path), payload)
    return 2 if failures else 0


def run_diagnostics(scenario_path, probe, out_dir, seed) -> int:
    scn = load_scenario(scenario_path)
    rng = np.random.default_rng(seed)
    space, g1, g2, mu0, t = scn["space"], scn["g1"], scn["g2"], scn["mu0"], scn["t"]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = _header(scn, seed)
    code = 0

    if probe == "equicontinuity":
        sizes = [10.0 ** -e for e in range(1, 5)]
        perts = [perturb_measure(mu0, s, rng) for s in sizes]
        dins = [bl_distance(mu0, p, space) for p in perts]
        family = sample_scheme_family(g1, g2, t / 8.0, 5, rng, scn["order"])
        ops = [at_time(g1, t / 8.0), at_time(g2, t / 8.0)]
        eprobe = EquicontinuityProbe(mu0, tuple(perts), tuple(dins),
                                     tuple(ops) + tuple(family))
        rows = equicontinuity_modulus(eprobe)
        _write_csv(out / "equicontinuity.csv", header,
                   ["inputDistance", "outputDistance"], rows)
    elif probe == "tightness":
        family = [at_time(g1, s) for s in (0.0, t / 2.0, t)]
        tp = tightness_probe(family, mu0, [0.25 * r for r in range(1, 17)])
        rows = [(lbl, r, m) for lbl, masses in zip(tp.labels, tp.mass_outside)
                for r, m in zip(tp.radius_grid, masses)]
        _write_csv(out / "tightness.csv", header,
                   ["operator", "radius", "massOutside"], rows)
    elif probe == "semigroup":
        dp, da, sc = limit_semigroup_check(g1, g2, mu0, t / 2.0, t / 2.0, 1024,
                                           scn["order"])
        _write_csv(out / "semigroup.csv", header, ["parameter", "value"],
                   [("distPower", dp), ("distAdditive", da),
                    ("selfConvergence", sc)])
    elif probe == "feller":
        rows = feller_continuity_check(g1, g2, t, mu0,
                                       [10.0 ** -e for e in range(1, 5)], 256, rng,
                                       scn["order"])
        _write_csv(out / "feller.csv", header,
                   ["inputDistance", "outputDistance"], rows)
    elif probe == "stochastic":
        h_grid = [10.0 ** -e for e in range(1, 7)]
        rows = stochastic_continuity_check(g1, mu0, h_grid)
        _write_csv(out / "stochastic.csv", header, ["h", "distance"], rows)
        # exact-formula check: translation lift of a unit Dirac
        if (g1.kind == "map_flow" and g1.flow_name == "translation"
                and len(mu0.points) == 1 and abs(mu0.tv - 1.0) < 1e-12):
            speed = float(np.linalg.norm(g1.flow_params.get("velocity", [1.0])))
            for h, d in rows:
                if abs(d - dirac_distance_exact(speed * h)) > 1e-9:
                    code = 2
    else:
        raise ScenarioError(f"unknown probe {probe!r}")
    return code


def _load_measure_file(space, path) -> SignedMeasure:
    doc = json.loads(Path(path).read_text())
    return SignedMeasure.from_atoms(
        space, [(a["point"], float(a["weight"])) for a in doc["atoms"]])


@click.group()
def main():
    """Switching-scheme studies, identity suites, and diagnostics."""
    _apply_thread_cap()


@main.command()
@click.option("--scenario", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, type=int)
@click.option("--t", default=None, type=float)
@click.option("--dyadic", default=None, type=int)
@click.option("--linear", default=None, type=int)
@click.option("--order", default=None, type=click.Choice(["12", "21"]))
@click.option("--metric", default=None, type=click.Choice(["base", "envelope"]))
def study(scenario, out, seed, t, dyadic, linear, order, metric):
    """Convergence study: report.csv, summary.json, modulus.csv, bounds.csv."""
    try:
        code = run_study(scenario, out, seed,
                         {"t": t, "dyadic": dyadic, "linear": linear,
                          "order": order, "metric": metric})
    except ScenarioError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    sys.exit(code)


@main.command()
@click.option("--seed", default=0, type=int)
@click.option("--trials", default=10, type=int)
@click.option("--max-states", default=4, type=int)
@click.option("--out", required=True, type=click.Path())
def identities(seed, trials, max_states, out):
    """Identity suite on seeded random instances; JSON results."""
    if trials < 1 or max_states < 2:
        click.echo("need trials >= 1 and max-states >= 2", err=True)
        sys.exit(1)
    sys.exit(run_identities(seed, trials, max_states, out))


@main.command()
@click.option("--scenario", required=True, type=click.Path())
@click.option("--probe", required=True,
              type=click.Choice(["equicontinuity", "tightness", "feller",
                                 "semigroup", "stochastic"]))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, type=int)
def diagnostics(scenario, probe, out, seed):
    """Evidence tables for the structural hypotheses."""
    try:
        code = run_diagnostics(scenario, probe, out, seed)
    except ScenarioError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    sys.exit(code)


@main.command()
@click.option("--scenario", required=True, type=click.Path(),
              help="Scenario file supplying the state space.")
@click.argument("measure_a", type=click.Path())
@click.argument("measure_b", type=click.Path())
def norm(scenario, measure_a, measure_b):
    """Ad-hoc BL distance between two measure files."""
    try:
        scn = load_scenario(scenario)
        mu = _load_measure_file(scn["space"], measure_a)
        nu = _load_measure_file(scn["space"], measure_b)
    except (ScenarioError, OSError, KeyError, json.JSONDecodeError) as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    click.echo(_fmt(bl_distance(mu, nu, scn["space"])))
    sys.exit(0)


if __name__ == "__main__":
    main()

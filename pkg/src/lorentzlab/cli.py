"""Scenario runner: deterministic execution, result persistence, and
numeric manifest diffing.

    lorentzlab run <config> <subcommand>
    lorentzlab diff <manifest1> <manifest2>

Subcommands: geometry-check | causal | interaction | adaptive |
reconstruct | all.  Every run writes ``manifest.json`` listing the
produced files and the assertions it evaluated; the exit status is
nonzero when an assertion fails (the failing names are printed).
Outputs are byte-identical across runs with the same config and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import adaptive, causal, config, curvature, geodesics
from . import interaction as ia
from . import metrics, reconstruction as rc


def _json_dump(obj, path):
    # sorted keys, repr floats, no timestamps: byte-stable across runs
    class Enc(json.JSONEncoder):
        def default(self, o):
            if isinstance(o, np.ndarray):
                return o.tolist()
            if isinstance(o, (np.floating, np.integer)):
                return o.item()
            return super().default(o)

    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, cls=Enc, sort_keys=True, indent=1)
        f.write("\n")


def _metric_from(cfg):
    name = cfg["scenario"]["metric"]
    params = dict(cfg.get("metric_params", {}))
    return metrics.make_metric(name, **params)


class Runner:
    def __init__(self, cfg, outdir):
        self.cfg = cfg
        self.outdir = Path(outdir)
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.assertions = []

    def check(self, name, value, bound, mode="le"):
        value = float(value)
        ok = value <= bound if mode == "le" else value >= bound
        self.assertions.append({"name": name, "value": value,
                                "bound": bound, "mode": mode,
                                "passed": bool(ok)})
        return ok

    def emit(self, name, obj):
        path = self.outdir / name
        _json_dump(obj, path)
        self.files.append(name)
        return path

    def emit_csv(self, name, header, rows):
        path = self.outdir / name
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) for v in row])
        self.files.append(name)
        return path

    def manifest(self, subcommand):
        man = {"subcommand": subcommand,
               "config": self.cfg,
               "files": sorted(self.files),
               "assertions": self.assertions}
        _json_dump(man, self.outdir / "manifest.json")
        return man


def run_geometry_check(r: Runner):
    cfg = r.cfg
    metric = _metric_from(cfg)
    rng = np.random.default_rng(cfg["scenario"]["seed"])
    pts = rng.uniform(-0.5, 0.5, (100, 4))
    div = curvature.divergence(
        metric,
        lambda y: curvature.einstein_components(*metric.jet_eval(y), y), pts)
    bianchi = float(np.abs(div).max())
    r.check("bianchi_max", bianchi, 1e-7)

    pert = metrics.perturbed(amplitude=5e-3, seed=cfg["scenario"]["seed"])
    x = pts[:10]
    red = curvature.reduced_einstein(pert, pert, x).components
    ein = curvature.einstein(pert, x).components
    gauge = float(np.abs(red - ein).max())
    r.check("reduced_equals_einstein", gauge, 1e-12)
    r.emit("geometry.json", {"bianchi_max": bianchi,
                             "gauge_residual": gauge,
                             "metric": metric.name})


def run_causal(r: Runner):
    cfg = r.cfg
    metric = _metric_from(cfg)
    seed = cfg["scenario"]["seed"]
    rng = np.random.default_rng(seed)
    family = causal.ObserverFamily(metric, z0=[-0.85, 0, 0, 0],
                                   eta0=[1, 0, 0, 0],
                                   radius=cfg["scenario"]["family_radius"],
                                   count=cfg["scenario"]["family_count"],
                                   seed=seed)
    # geodesic dump
    x0 = np.array([0.0, 0.05, -0.1, 0.0])
    v0 = causal.timelike_unit(metric, x0, np.array([0.2, 0.1, -0.05]))
    path = geodesics.geodesic_flow(metric, x0, v0, 1.5, n_samples=60)
    rows = [[s, *path.eval(s)] for s in path.s]
    r.emit_csv("geodesic.csv", ["s"] + [f"x{i}" for i in range(4)]
               + [f"v{i}" for i in range(4)], rows)
    drift = np.abs(geodesics.norm_sq(metric, path.states)
                   - geodesics.norm_sq(metric, path.states[0]))
    r.check("norm_conservation", float(drift.max()), 1e-9)

    # dual-route time separation
    q = np.array([0.0, 0.02, -0.03, 0.01])
    y = np.array([0.6, 0.2, 0.1, -0.05])
    tau_shoot = causal.time_separation(metric, q, y)
    tau_prod = causal.time_separation(metric, q, y, engine="product")
    r.check("tau_route_agreement", abs(tau_shoot - tau_prod), 1e-7)

    rec = causal.earliest_light_observation_set(metric, q, family)
    r.emit("observation_record.json", rec.to_json_dict())
    gen = causal.first_cone_arrivals(metric, q, family)
    r.check("record_route_agreement",
            float(np.abs(gen - rec.values).max()), 1e-7)


def run_interaction(r: Runner):
    cfg = r.cfg["interaction"]
    a = cfg["a"]
    leaders, violations = ia.dominance_report(a=a, N=cfg["hierarchy_n"])
    r.check("dominance_violations", len(violations), 0)
    r.check("dominance_leaders", len(leaders), 2, mode="le")
    r.emit("dominance.json",
           {"leaders": [{k: list(v) if isinstance(v, tuple) else v
                         for k, v in m.items()} for m in leaders],
            "violations": len(violations),
            "a": a, "N": cfg["hierarchy_n"]})

    rhos = ia.hierarchy_rhos(0.05, N=2)
    cov = ia.build_covectors(rhos)
    vs = ia.chosen_polarizations(cov)
    kappa, _ = ia.kappa_determinant(cov, vs)
    r.check("kappa_nonzero", abs(kappa), 1e-8, mode="ge")

    rho_o = [cfg["rho1"], cfg["rho2"], cfg["rho3"], cfg["rho4"]]
    a_o = cfg["a_oracle"]
    taus = [t for t in (250.0, 500.0, 1000.0, 2000.0)
            if t <= cfg["tau_max"]]
    table = []
    worst_slope = 0.0
    worst_ratio = 1.0
    for fam, k in (("T.QQ", (2, 2, 0, 2)), ("T.QI", (2, 2, 0, 0)),
                   ("T.II", (2, 0, 0, 0))):
        vals = [abs(ia.oscillatory_integral_oracle(a_o, k, rho_o, tau,
                                                   family=fam))
                for tau in taus]
        slope = float(np.polyfit(np.log(taus), np.log(vals), 1)[0])
        expect = ia.closed_form_tau_exponent(a_o, k, fam)
        ratio = vals[-1] / abs(ia.closed_form_value(a_o, k, rho_o, taus[-1],
                                                    family=fam))
        table.append({"family": fam, "k": list(k), "slope": slope,
                      "exponent": expect, "ratio": float(ratio)})
        worst_slope = max(worst_slope, abs(slope - expect))
        worst_ratio = max(worst_ratio, abs(ratio - 1.0) + 1.0)
    r.emit("oracle_table.json", {"entries": table})
    r.check("oracle_slope", worst_slope, 0.05)
    r.check("oracle_ratio", worst_ratio, 1.1)


def run_adaptive(r: Runner):
    cfg = r.cfg
    rng = np.random.default_rng(cfg["scenario"]["seed"])
    n = cfg["adaptive"]["n_frames"]
    scale = cfg["adaptive"]["input_scale"]
    worst_res = 0.0
    worst_iter = 0
    ranks = []
    for _ in range(n):
        g = metrics.MINKOWSKI + 0.05 * _sym(rng.standard_normal((4, 4)))
        try:
            frame = adaptive.PointFrame(g, rng.uniform(-1.5, 1.5, 5),
                                        rng.uniform(-1, 1, (4, 5)), 1.0)
        except ValueError:
            continue
        _, cond = adaptive.condition_A_matrix(frame)
        if cond > 1e4:
            continue
        inp = adaptive.SourceInput(scale * rng.standard_normal(6),
                                   scale * rng.standard_normal(4))
        S, it, res = adaptive.solve_adaptive_sources(frame, inp)
        worst_res = max(worst_res, res)
        worst_iter = max(worst_iter, it)
        _, rank = adaptive.source_differential(frame)
        ranks.append(rank)
    r.check("solver_residual", worst_res, 1e-12)
    r.check("solver_iterations", worst_iter, 30)
    r.check("differential_rank_min", -min(ranks), -5)
    r.emit("adaptive.json", {"frames": len(ranks),
                             "worst_residual": worst_res,
                             "worst_iterations": worst_iter})


def _sym(m):
    return 0.5 * (m + m.T)


def run_reconstruct(r: Runner):
    cfg = r.cfg
    name = cfg["scenario"]["metric"]
    scn = rc.build_scenario(
        name, metric_params=dict(cfg.get("metric_params", {})),
        family_count=cfg["scenario"]["family_count"],
        family_radius=cfg["scenario"]["family_radius"],
        seed=cfg["scenario"]["seed"],
        s_minus=cfg["scenario"]["s_minus"],
        s_plus=cfg["scenario"]["s_plus"],
        t0_max=cfg["scenario"]["t0_max"])
    rcfg = cfg["reconstruction"]
    cloud = rc.reconstruct_diamond(scn,
                                   n_stage_points=rcfg["n_stage_points"],
                                   n_dirs=rcfg["n_dirs"],
                                   n_grid=rcfg["n_grid"],
                                   seed_count=rcfg["seed_count"])
    targets = rc.diamond_targets(scn, rcfg["delta"])
    coverage = rc.coverage_radius(cloud, targets)
    truth = [(q, rc.ground_truth_record(scn, q)) for q, _ in cloud]
    score = rc.conformal_consistency(cloud, truth, matching="index")
    r.check("coverage_radius", coverage, rcfg["delta"])
    r.check("consistency_score", score, rcfg["score_tolerance"])
    r.emit("cloud.json", [{"q": list(q), "record": rec.to_json_dict()}
                          for q, rec in cloud])
    r.emit_csv("cloud_plot.csv", ["stage", "x0", "x1", "x2", "x3", "first"],
               [[0, *q, rec.values.min()] for q, rec in cloud])


SUBCOMMANDS = {
    "geometry-check": run_geometry_check,
    "causal": run_causal,
    "interaction": run_interaction,
    "adaptive": run_adaptive,
    "reconstruct": run_reconstruct,
}


def run(config_path, subcommand, outdir=None):
    cfg = config.parse_file(config_path)
    outdir = outdir or cfg["output"]["directory"]
    runner = Runner(cfg, outdir)
    names = (list(SUBCOMMANDS) if subcommand == "all" else [subcommand])
    for name in names:
        if name not in SUBCOMMANDS:
            raise SystemExit(f"unknown subcommand {name!r}; have "
                             f"{sorted(SUBCOMMANDS)} or 'all'")
        SUBCOMMANDS[name](runner)
    man = runner.manifest(subcommand)
    failed = [a["name"] for a in man["assertions"] if not a["passed"]]
    for a in man["assertions"]:
        status = "PASS" if a["passed"] else "FAIL"
        print(f"[{status}] {a['name']}: {a['value']:.3e} "
              f"({a['mode']} {a['bound']:.3e})")
    if failed:
        print("failed assertions:", ", ".join(failed))
        return 1
    return 0


def diff(manifest_a, manifest_b):
    with open(manifest_a, encoding="utf-8") as f:
        a = json.load(f)
    with open(manifest_b, encoding="utf-8") as f:
        b = json.load(f)
    if a["subcommand"] != b["subcommand"]:
        print("usage error: manifests come from different subcommands "
              f"({a['subcommand']} vs {b['subcommand']})")
        return 2
    tol = a["config"].get("diff", {}).get("default_tolerance", 1e-12)
    report = []

    def walk(pa, pb, path):
        if isinstance(pa, dict) and isinstance(pb, dict):
            for k in sorted(set(pa) | set(pb)):
                if k not in pa or k not in pb:
                    report.append((path + [k], "missing", None))
                    continue
                walk(pa[k], pb[k], path + [k])
        elif isinstance(pa, list) and isinstance(pb, list):
            if len(pa) != len(pb):
                report.append((path, "length", abs(len(pa) - len(pb))))
                return
            for i, (va, vb) in enumerate(zip(pa, pb)):
                walk(va, vb, path + [str(i)])
        elif isinstance(pa, (int, float)) and isinstance(pb, (int, float)):
            d = abs(float(pa) - float(pb))
            if d > tol:
                report.append((path, "numeric", d))
        elif pa != pb:
            report.append((path, "value", None))

    walk(a["assertions"], b["assertions"], ["assertions"])
    if not report:
        print("empty diff")
        return 0
    for path, kind, mag in report:
        loc = ".".join(path)
        print(f"{loc}: {kind}" + (f" |delta| = {mag:.3e}" if mag else ""))
    return 1


def main(argv=None):
    parser = argparse.ArgumentParser(prog="lorentzlab",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a scenario subcommand")
    p_run.add_argument("config")
    p_run.add_argument("subcommand",
                       choices=sorted(SUBCOMMANDS) + ["all"])
    p_run.add_argument("--outdir", default=None)
    p_diff = sub.add_parser("diff", help="numeric diff of two manifests")
    p_diff.add_argument("manifest_a")
    p_diff.add_argument("manifest_b")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, args.subcommand, args.outdir)
    return diff(args.manifest_a, args.manifest_b)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line runner: ``glauber-lab <task> --config FILE [--seed N] [--out DIR]``.

Exit status is 0 when every checked inequality holds, 2 when one fails and
1 on usage or configuration errors. Reports are JSON with sorted keys and no
timestamps, so reruns with the same seed are byte-identical; run metadata
goes to a ``.meta.json`` sidecar.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (
    block_matrix,
    exact_mixing_time,
    glauber_matrix,
    mixing_bound_from_certificate,
    tensorization_mixing_bound,
)
from .errors import ConfigError, InstanceTooLarge, LabError
from .exact_dist import (
    ENUM_CAP,
    PINNING_CAP,
    distribution_to_json,
    enumerate_gibbs,
    influence_matrix,
    influence_sweep,
)
from .factorization import comparison_pipeline, tensorization_ratio
from .graph_core import (
    PATH_TREE_CAP,
    Graph,
    complete_graph,
    cycle_graph,
    path_graph,
    path_tree,
    random_regular_graph,
    read_graph_file,
    star_graph,
)
from .matching_influence import (
    edge_influence_table,
    exhaustive_pinning_check,
    graph_to_tree_check,
    polynomial_identity_check,
    total_influence_bound,
)
from .simplicial import (
    build_levels,
    local_expansion,
    measured_certificate,
    measured_entropy_contraction,
    variance_certificate,
)
from .spin_models import critical_fugacity, hardcore, monomer_dimer, system_from_json

TASKS = ("enumerate", "influence", "certificate", "factorization", "mixing",
         "matching-bounds", "verify-all", "sweep")
SCHEMA = 1
EXHAUSTIVE_EDGE_CAP = 15

DEFAULTS = {
    "epsilon": 0.25,
    "theta": None,
    "ell": None,
    "trials": 20,
    "restarts": 8,
    "caps": {"enum": ENUM_CAP, "pinning": PINNING_CAP, "matrix": 4096, "path_tree": PATH_TREE_CAP},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="glauber-lab", description="Exact verification of spectral-independence "
                "and block-factorization bounds on small spin systems.")
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    return p


# config

def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: invalid JSON at line {exc.lineno}: {exc.msg}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("schema") != SCHEMA:
        raise ConfigError(f"config needs \"schema\": {SCHEMA}")
    base = Path(path).parent
    merged = {**DEFAULTS, **cfg}
    merged["caps"] = {**DEFAULTS["caps"], **cfg.get("caps", {})}
    merged["_base"] = str(base)
    if not 0 < merged["epsilon"] < 1:
        raise ConfigError("epsilon must lie in (0, 1)")
    if merged["trials"] < 0 or merged["restarts"] < 1:
        raise ConfigError("trials must be >= 0 and restarts >= 1")
    return merged


def graph_from_config(source: dict, base: str = ".") -> Graph:
    if "file" in source:
        path = Path(base) / source["file"]
        if not path.exists():
            raise ConfigError(f"graph file {path} not found")
        return read_graph_file(path)
    gen = source.get("generator")
    try:
        if gen == "path":
            return path_graph(int(source["n"]))
        if gen == "cycle":
            return cycle_graph(int(source["n"]))
        if gen == "star":
            return star_graph(int(source["leaves"]))
        if gen == "complete":
            return complete_graph(int(source["n"]))
        if gen == "random-regular":
            return random_regular_graph(int(source["n"]), int(source["d"]), int(source.get("seed", 0)))
    except KeyError as exc:
        raise ConfigError(f"graph generator {gen!r} needs field {exc.args[0]!r}")
    raise ConfigError(f"unknown graph source {source!r}")


def instance(cfg: dict):
    """``(system, graph the system lives on, base graph)``; matchings live on the line graph."""
    if "graph" not in cfg or "model" not in cfg:
        raise ConfigError("config needs \"graph\" and \"model\"")
    g = graph_from_config(cfg["graph"], cfg.get("_base", "."))
    model = cfg["model"]
    if model.get("model") == "monomer_dimer":
        s, lg, _ = monomer_dimer(g, float(model["params"]["lambda"]))
        return s, lg, g
    return system_from_json(model), g, g


# tasks

def _check(name, lhs, rhs, tol=1e-9) -> dict:
    return {"name": name, "lhs": float(lhs), "rhs": float(rhs),
            "holds": bool(lhs <= rhs + tol * max(1.0, abs(rhs)))}


def task_enumerate(cfg, seed):
    s, g, _ = instance(cfg)
    d = enumerate_gibbs(s, g, cap=cfg["caps"]["enum"])
    return {"distribution": distribution_to_json(d)}, []


def task_influence(cfg, seed):
    s, g, _ = instance(cfg)
    d = enumerate_gibbs(s, g, cap=cfg["caps"]["enum"])
    sw = influence_sweep(d, cap=cfg["caps"]["pinning"])
    res = {"eta": sw.eta, "argmax_pinning": {str(v): x for v, x in sw.argmax.as_dict().items()},
           "pinnings": sw.count, "max_imag": sw.max_imag}
    checks = [_check("influence eigenvalues real", sw.max_imag, 1e-8, tol=0)]
    if d.n >= 2:
        im = influence_matrix(d)
        res["unpinned_lambda1"] = im.lambda1
        res["unpinned_eigenvalues"] = [float(x.real) for x in im.eigenvalues]
    return res, checks


def task_certificate(cfg, seed):
    s, g, _ = instance(cfg)
    d = enumerate_gibbs(s, g, cap=cfg["caps"]["enum"])
    cx = build_levels(d)
    prof = local_expansion(cx)
    cert = measured_certificate(cx, profile=prof)
    checks = []
    variance = []
    for top in range(1, d.n + 1):
        for r in range(top):
            vc = variance_certificate(cx, top, r, prof)
            variance.append({"r": r, "s": top, "gap": vc.gap, "bound": vc.bound,
                             "bound_product": vc.bound_al})
            checks.append(_check(f"variance bound <= gap ({r},{top})", vc.bound, vc.gap))
            if vc.bound_al is not None:
                checks.append(_check(f"product bound <= gap ({r},{top})", vc.bound_al, vc.gap))
    contraction = []
    for r in range(d.n):
        cr = measured_entropy_contraction(cx, r, d.n, trials=cfg["trials"],
                                          restarts=cfg["restarts"], seed=seed + r)
        contraction.append({"r": r, "observed": cr.ratio, "kappa": cert.kappa(r)})
        checks.append(_check(f"kappa <= observed contraction ({r},{d.n})", cert.kappa(r), cr.ratio))
    return {"certificate": cert.to_json(), "variance": variance,
            "entropy_contraction": contraction}, checks


def task_factorization(cfg, seed):
    s, g, _ = instance(cfg)
    d = enumerate_gibbs(s, g, cap=cfg["caps"]["enum"])
    rep = comparison_pipeline(d, theta=cfg["theta"], trials=cfg["trials"],
                              restarts=cfg["restarts"], seed=seed)
    var = tensorization_ratio(d, "variance", trials=cfg["trials"], restarts=cfg["restarts"],
                              seed=seed + 7)
    checks = list(rep.chain)
    checks.append(_check("variance tensorization search <= 1/(n gap)", var.C_measured, var.exact))
    return {"pipeline": rep.to_json(), "variance_tensorization": var.to_json()}, checks


def task_mixing(cfg, seed):
    s, g, _ = instance(cfg)
    d = enumerate_gibbs(s, g, cap=cfg["caps"]["enum"])
    eps = cfg["epsilon"]
    chain = glauber_matrix(d, cap=cfg["caps"]["matrix"])
    rep = exact_mixing_time(chain, eps, cap=cfg["caps"]["matrix"])
    cert = measured_certificate(build_levels(d))
    checks = []
    if cert.kappa(d.n - 1) > 0:
        b1 = mixing_bound_from_certificate(cert, d.min_prob, eps)
        rep.bounds["entropy contraction"] = b1
        checks.append(_check("t_mix <= contraction bound", rep.t_mix, b1))
    C1 = cert.C_block(1)
    if math.isfinite(C1):
        b2 = tensorization_mixing_bound(max(C1, 1.0), d.n, d.min_prob, eps)
        rep.bounds["tensorization"] = b2
        checks.append(_check("t_mix <= tensorization bound", rep.t_mix, b2))
    return {"mixing": rep.to_json()}, checks


def task_matching_bounds(cfg, seed):
    model = cfg["model"]
    if model.get("model") != "monomer_dimer":
        raise ConfigError("matching-bounds needs model \"monomer_dimer\"")
    lam = float(model["params"]["lambda"])
    g = graph_from_config(cfg["graph"], cfg.get("_base", "."))
    bound = total_influence_bound(lam, g.max_degree)
    checks, rows = [], []
    for e in range(g.m):
        t = edge_influence_table(g, lam, e)
        rows.append({"edge": list(g.edges[e]), "total": t.total})
        checks.append(_check(f"total influence of {g.edges[e]} <= bound", t.total, bound))
    res = {"bound": bound, "edges": rows}
    if g.m <= EXHAUSTIVE_EDGE_CAP:
        ex = exhaustive_pinning_check(g, lam)
        res["all_pinnings"] = {"subsets": ex.subsets, "max_row_total": ex.max_row_total,
                               "max_eta": ex.max_eta}
        checks.append(_check("max total influence over pinnings <= bound", ex.max_row_total, bound))
        checks.append(_check("eta over pinnings <= bound", ex.max_eta, bound))
    rng = np.random.default_rng(seed)
    worst_tree, worst_poly = 0.0, 0.0
    for r in range(g.n):
        if not g.adjacency[r]:
            continue
        t = path_tree(g, r, cap=cfg["caps"]["path_tree"])
        for v in g.adjacency[r]:
            e = g.edge_id(r, v)
            gs, ts = graph_to_tree_check(g, r, lam, e, tree=t)
            worst_tree = max([worst_tree] + [abs(gs[f] - ts[f]) for f in gs])
        pc = polynomial_identity_check(g, r, rng.uniform(0.1, 2.0, g.m), tree=t)
        worst_poly = max(worst_poly, abs(pc.graph_ratio - pc.tree_ratio) / pc.graph_ratio,
                         pc.quotient_shift)
    res["graph_to_tree_max_error"] = worst_tree
    res["polynomial_identity_max_error"] = worst_poly
    checks.append(_check("graph-to-tree influence identity", worst_tree, 1e-10, tol=0))
    checks.append(_check("polynomial identities", worst_poly, 1e-10, tol=0))
    return res, checks


def task_verify_all(cfg, seed):
    parts = [("influence", task_influence), ("certificate", task_certificate),
             ("factorization", task_factorization), ("mixing", task_mixing)]
    if cfg["model"].get("model") == "monomer_dimer":
        parts.append(("matching-bounds", task_matching_bounds))
    res, checks = {}, []
    for name, fn in parts:
        r, c = fn(cfg, seed)
        res[name] = r
        checks += [{**x, "name": f"{name}: {x['name']}"} for x in c]
    return res, checks


RUNNERS = {
    "enumerate": task_enumerate,
    "influence": task_influence,
    "certificate": task_certificate,
    "factorization": task_factorization,
    "mixing": task_mixing,
    "matching-bounds": task_matching_bounds,
    "verify-all": task_verify_all,
}


# sweeps

SWEEP_COLUMNS = ("parameter", "value", "measured", "certified")


def sweep_values(grid: dict) -> list[float]:
    if "values" in grid:
        vals = [float(v) for v in grid["values"]]
    else:
        start, stop, step = float(grid["start"]), float(grid["stop"]), float(grid["step"])
        if step <= 0:
            raise ConfigError("sweep step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [round(start + i * step, 12) for i in range(count)]
    if not vals:
        raise ConfigError("sweep grid is empty")
    return vals


def run_sweep(cfg: dict) -> tuple[str, list]:
    """CSV rows ``parameter, value, measured, certified``.

    ``lambda``: eta of the configured model with its fugacity replaced;
    ``delta``: critical hard-core fugacity (float, exact fraction);
    ``ell``: exact gap of the ell-block dynamics against the certified
    contraction rate.
    """
    grid = cfg.get("sweep")
    if not grid:
        raise ConfigError("sweep task needs a \"sweep\" section")
    param = grid.get("parameter")
    vals = sweep_values(grid)
    rows = []
    if param == "lambda":
        model = cfg["model"]
        for lam in vals:
            sub = {**cfg, "model": {**model, "params": {**model.get("params", {}), "lambda": lam}}}
            s, g, base = instance(sub)
            d = enumerate_gibbs(s, g, cap=cfg["caps"]["enum"])
            eta = influence_sweep(d, cap=cfg["caps"]["pinning"]).eta
            cert = total_influence_bound(lam, base.max_degree) \
                if model.get("model") == "monomer_dimer" else ""
            rows.append(["lambda", lam, eta, cert])
    elif param == "delta":
        for delta in vals:
            lc = critical_fugacity(int(delta))
            rows.append(["delta", int(delta), float(lc), str(lc)])
    elif param == "ell":
        s, g, _ = instance(cfg)
        d = enumerate_gibbs(s, g, cap=cfg["caps"]["enum"])
        cert = measured_certificate(build_levels(d))
        from ._numerics import spectral_gap
        for ell in vals:
            ell = int(ell)
            c = block_matrix(d, ell, cap=cfg["caps"]["matrix"])
            rows.append(["ell", ell, spectral_gap(c.P, c.pi), cert.kappa(d.n - ell)])
    else:
        raise ConfigError(f"unknown sweep parameter {param!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([x if isinstance(x, str) else repr(x) if isinstance(x, float) else x
                    for x in row])
    return buf.getvalue(), rows


# output

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def run(task: str, cfg: dict, seed: int, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    public_cfg = {k: v for k, v in cfg.items() if not k.startswith("_")}
    started = time.time()
    if task == "sweep":
        text, rows = run_sweep(cfg)
        (out / "sweep.csv").write_text(text)
        report = {"task": task, "config": public_cfg, "seed": seed, "version": __version__,
                  "rows": len(rows), "columns": list(SWEEP_COLUMNS), "passed": True}
        checks = []
    else:
        results, checks = RUNNERS[task](cfg, seed)
        report = {"task": task, "config": public_cfg, "seed": seed, "version": __version__,
                  "results": results, "checks": checks,
                  "passed": all(c["holds"] for c in checks)}
    (out / f"{task}.json").write_text(dump_json(report))
    meta = {"task": task, "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
            "elapsed_seconds": round(time.time() - started, 3), "version": __version__}
    (out / f"{task}.meta.json").write_text(dump_json(meta))
    failed = [c["name"] for c in checks if not c["holds"]]
    for name in failed:
        print(f"FAILED: {name}", file=sys.stderr)
    print(f"{task}: {'ok' if not failed else f'{len(failed)} check(s) failed'} "
          f"-> {out / (task + '.json')}")
    return 2 if failed else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        return run(args.task, cfg, seed, Path(args.out))
    except InstanceTooLarge as exc:
        print(f"glauber-lab: instance too large: {exc}. Use a smaller graph or raise the "
              f"matching entry under \"caps\" in the config.", file=sys.stderr)
        return 1
    except LabError as exc:
        print(f"glauber-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: data ingestion, configuration, dispatch, and
result emission for every model family.

Commands: fit (single-v0 fit -> state JSON), path (v0 sweep -> CSV),
select (path + scoring + point estimate -> JSON + CSV), simulate (named
designs -> data/truth CSV), metrics (FDP/POW/MSE from files), oracle
(reference-check suite -> CSV report).

Exit codes: 0 ok, 2 configuration error, 3 numeric failure, 4 no valid
candidate.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import graphs as gr
from . import oracle as orc
from .bicluster import ProductSpec, bicluster_path, bicluster_select, run_bicluster_em
from .cluster import ClusterSpec, cluster_path, run_cluster_em, select_clustering
from .em import ModelSpec, run_em, solution_path
from .errors import ConfigError, GraphSlabError, NoValidCandidateError, NumericError
from .isotonic import IsoSpec, iso_path, iso_select, run_iso_em
from .selection import metrics as compute_metrics
from .selection import select
from .simulate import simulate

MODELS = ("general", "cluster", "bicluster-cartesian", "bicluster-kronecker", "isotonic")


# ---------------------------------------------------------------------------
# configuration plumbing


def _resolve_config(args: argparse.Namespace) -> dict:
    """JSON config file (if any) with every non-None CLI flag overriding the
    field of the same name."""
    cfg: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        cfg.update(json.loads(path.read_text()))
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None:
            continue
        cfg[key] = val
    cfg["version"] = __version__
    cfg["rng"] = "numpy.random.default_rng (PCG64)"
    return cfg


def _parse_grid(text: str) -> np.ndarray:
    """Either comma-separated values or "lo:hi:num" (geometric)."""
    if ":" in text:
        lo, hi, num = text.split(":")
        return np.geomspace(float(lo), float(hi), int(num))
    return np.array([float(t) for t in text.split(",")])


def _make_graph(cfg: dict) -> gr.Graph:
    if cfg.get("edge_list"):
        path = Path(cfg["edge_list"])
        if not path.exists():
            raise ConfigError(f"edge list not found: {path}")
        return gr.from_edge_list(path)
    name = cfg.get("graph")
    if not name:
        raise ConfigError("a graph source is required (--graph or --edge-list)")
    kind, _, arg = name.partition(":")
    try:
        if kind == "chain":
            return gr.chain(int(arg))
        if kind == "star":
            return gr.star(int(arg))
        if kind == "complete":
            return gr.complete(int(arg))
        if kind == "grid":
            a, b = arg.split("x")
            return gr.grid(int(a), int(b))
        if kind == "complete-bipartite":
            a, b = arg.split("x")
            return gr.complete_bipartite(int(a), int(b))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad graph spec {name!r}: {exc}") from exc
    raise ConfigError(f"unknown graph constructor {kind!r}")


def _read_matrix(path, ndim: int | None = None) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"data file not found: {p}")
    arr = np.loadtxt(p, delimiter=",", ndmin=ndim or 1)
    return arr


def _json_ready(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_json_ready(payload), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _out_dir(cfg: dict) -> Path:
    return Path(cfg.get("out", "."))


# ---------------------------------------------------------------------------
# model dispatch


def _build_spec(cfg: dict, y: np.ndarray):
    model = cfg.get("model", "general")
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}")
    common = dict(
        nu=float(cfg.get("nu", 0.0)),
        v1=float(cfg.get("v1", 100.0)),
        a=float(cfg.get("a", 1.0)),
        b=float(cfg.get("b", 1.0)),
    )
    if model == "general":
        g = _make_graph(cfg)
        X = _read_matrix(cfg["design"], ndim=2) if cfg.get("design") else None
        return ModelSpec(
            g=g, w=np.ones(g.p), X=X,
            A=float(cfg.get("A", 1.0)), B=float(cfg.get("B", 1.0)), **common,
        )
    if model == "cluster":
        if "k" not in cfg:
            raise ConfigError("clustering needs --k")
        return ClusterSpec(k=int(cfg["k"]), **common)
    if model.startswith("bicluster"):
        if "k1" not in cfg or "k2" not in cfg:
            raise ConfigError("biclustering needs --k1 and --k2")
        if y.ndim != 2:
            raise ConfigError("biclustering needs a 2-D data matrix")
        return ProductSpec(
            mode=model.split("-", 1)[1], k1=int(cfg["k1"]), k2=int(cfg["k2"]), **common,
        )
    return IsoSpec(A=float(cfg.get("A", 1.0)), B=float(cfg.get("B", 1.0)), **common)


def _load_data(cfg: dict) -> np.ndarray:
    if "data" not in cfg:
        raise ConfigError("a data file is required (--data)")
    model = cfg.get("model", "general")
    want2d = model.startswith("bicluster")
    return _read_matrix(cfg["data"], ndim=2 if want2d else 1)


def _grid_arg(cfg: dict):
    raw = cfg.get("v0_grid")
    if raw is None:
        return None
    return _parse_grid(raw) if isinstance(raw, str) else np.asarray(raw, dtype=float)


# ---------------------------------------------------------------------------
# commands


def cmd_fit(cfg: dict) -> int:
    y = _load_data(cfg)
    spec = _build_spec(cfg, y)
    v0 = cfg.get("v0")
    if v0 is None:
        raise ConfigError("fit needs --v0")
    v0 = float(v0)
    model = cfg.get("model", "general")
    if model == "general":
        state, trace = run_em(spec, y, v0)
        payload = {"q": state.q, "alpha": state.alpha, "theta": state.theta,
                   "sigma2": state.sigma2, "eta": state.eta}
    elif model == "cluster":
        state, trace = run_cluster_em(y, spec, v0, seed=int(cfg.get("seed", 0)))
        payload = {"q": state.q, "alpha": state.alpha, "theta": state.theta,
                   "mu": state.mu, "sigma2": state.sigma2}
    elif model.startswith("bicluster"):
        state, trace = run_bicluster_em(y, spec, v0, seed=int(cfg.get("seed", 0)))
        payload = {"q1": state.q1, "q2": state.q2, "alpha": state.alpha,
                   "theta": state.theta, "sigma2": state.sigma2}
        payload["mu"] = state.mu if model.endswith("kronecker") else None
        if model.endswith("cartesian"):
            payload["mu1"], payload["mu2"] = state.mu1, state.mu2
    else:
        state, trace = run_iso_em(y, spec, v0)
        payload = {"q": state.q, "alpha": state.alpha, "theta": state.theta,
                   "sigma2": state.sigma2, "eta": state.eta}
    payload.update({"iterations": len(trace), "objective": trace[-1], "config": cfg})
    _write_json(_out_dir(cfg) / "state.json", payload)
    return 0


def _path_rows(cfg: dict, y: np.ndarray, spec):
    """(rows, artifacts) for the path command; one row per grid point:
    v0, iterations, elbo, num_fused."""
    model = cfg.get("model", "general")
    mode = cfg.get("mode", "warm").replace("serial-", "").replace("parallel-", "")
    grid = _grid_arg(cfg)
    seed = int(cfg.get("seed", 0))
    if model == "general":
        path = solution_path(spec, y, v0_grid=grid, mode=mode)
        rows = [(pt.v0, pt.n_iter, pt.elbo, int(pt.gamma_hat.sum())) for pt in path.points]
        return rows, path
    if model == "cluster":
        path = cluster_path(y, spec, v0_grid=grid, mode=mode, seed=seed)
        rows = [(pt.v0, pt.n_iter, pt.elbo, y.shape[0] - pt.reduced.k_hat) for pt in path]
        return rows, path
    if model.startswith("bicluster"):
        path = bicluster_path(y, spec, v0_grid=grid, mode=mode, seed=seed)
        rows = [
            (pt.v0, pt.n_iter, pt.elbo, (y.shape[0] - pt.k1_hat) + (y.shape[1] - pt.k2_hat))
            for pt in path
        ]
        return rows, path
    path = iso_path(y, spec, v0_grid=grid, mode=mode)
    rows = [(pt.v0, pt.n_iter, pt.elbo, int(pt.gamma_hat.sum())) for pt in path]
    return rows, path


def cmd_path(cfg: dict) -> int:
    y = _load_data(cfg)
    spec = _build_spec(cfg, y)
    rows, _ = _path_rows(cfg, y, spec)
    _write_csv(_out_dir(cfg) / "path.csv", ["v0", "iterations", "elbo", "num_fused"], rows)
    _write_json(_out_dir(cfg) / "path_config.json", {"config": cfg})
    return 0


def cmd_select(cfg: dict) -> int:
    y = _load_data(cfg)
    spec = _build_spec(cfg, y)
    model = cfg.get("model", "general")
    mode = cfg.get("mode", "warm").replace("serial-", "").replace("parallel-", "")
    grid = _grid_arg(cfg)
    seed = int(cfg.get("seed", 0))
    out = _out_dir(cfg)
    if model == "general":
        res = select(spec, y, solution_path(spec, y, v0_grid=grid, mode=mode))
        payload = {"gamma_hat": res.gamma_hat, "score": res.score, "beta_hat": res.beta_hat}
        table = [(r.v0, r.num_fused, r.score, r.valid) for r in res.table]
    elif model == "cluster":
        res = select_clustering(y, spec, cluster_path(y, spec, v0_grid=grid, mode=mode, seed=seed))
        payload = {
            "assignments": res.assignments, "k_tilde": res.k_tilde,
            "score": res.score, "fitted": res.fitted,
        }
        table = res.table
    elif model.startswith("bicluster"):
        c_grid = cfg.get("c_grid")
        if isinstance(c_grid, str):
            c_grid = tuple(float(t) for t in c_grid.split(","))
        res = bicluster_select(y, spec, c_grid=c_grid, v0_grid=grid, mode=mode, seed=seed)
        payload = {
            "row_assignments": res.row_assignments, "col_assignments": res.col_assignments,
            "k1_tilde": res.k1_tilde, "k2_tilde": res.k2_tilde,
            "score": res.score, "fitted": res.fitted,
        }
        table = res.table
    else:
        gamma, score, table = iso_select(y, spec, iso_path(y, spec, v0_grid=grid, mode=mode))
        payload = {"gamma_hat": gamma, "score": score}
    payload["config"] = cfg
    _write_json(out / "selection.json", payload)
    _write_csv(out / "score_table.csv", ["v0", "complexity", "score", "valid"],
               [tuple(row)[:4] for row in table])
    return 0


def cmd_simulate(cfg: dict) -> int:
    design = cfg.get("design")
    if not design:
        raise ConfigError("simulate needs --design")
    kw = {}
    for key in ("n", "pieces", "spacing", "gap", "kappa", "n1", "n2", "blocks", "anchors"):
        if key in cfg:
            kw[key] = cfg[key]
    if design == "anchor":
        kw["graph"] = _make_graph(cfg)
    y, truth = simulate(design, sigma=float(cfg.get("sigma", 1.0)),
                        seed=int(cfg.get("seed", 0)), **kw)
    out = _out_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "data.csv", np.atleast_2d(y), delimiter=",")
    np.savetxt(out / "truth.csv", np.atleast_2d(truth), delimiter=",")
    _write_json(out / "simulate_config.json", {"config": cfg})
    return 0


def cmd_metrics(cfg: dict) -> int:
    if "gamma_hat" not in cfg or "gamma_star" not in cfg:
        raise ConfigError("metrics needs --gamma-hat and --gamma-star files")
    gh = _read_matrix(cfg["gamma_hat"]).ravel()
    gs = _read_matrix(cfg["gamma_star"]).ravel()
    bh = _read_matrix(cfg["beta_hat"]) if cfg.get("beta_hat") else None
    bs = _read_matrix(cfg["beta_star"]) if cfg.get("beta_star") else None
    X = _read_matrix(cfg["design"], ndim=2) if cfg.get("design") else None
    fdp, pow_, mse = compute_metrics(gh, gs, beta_hat=bh, beta_star=bs, X=X)
    payload = {"fdp": fdp, "pow": pow_, "mse": mse, "config": cfg}
    print(json.dumps(_json_ready(payload)))
    if cfg.get("out"):
        _write_json(_out_dir(cfg) / "metrics.json", payload)
    return 0


def _oracle_rows(seed: int = 0) -> list[tuple]:
    """Default reference-check suite: matrix-tree log-sums on small random
    graphs, effective-resistance closed forms, and the spanning-tree bound
    accuracy e^(f2 - f1)."""
    rng = np.random.default_rng(seed)
    rows = []
    for trial in range(10):
        p = int(rng.integers(3, 7))
        if p > 8:
            raise ConfigError("oracle enumeration is limited to p <= 8")
        g = gr.complete(p)
        gamma = rng.uniform(size=g.m)
        v0 = float(rng.uniform(0.05, 1.0))
        v1 = float(rng.uniform(1.0, 100.0))
        f1, f2 = orc.exact_log_partition(g, gamma, v0, v1)
        w = gr.spike_slab_weights(gamma, v0, v1)
        trees = orc.enumerate_spanning_trees(g)
        ref = float(np.log(sum(np.exp(sum(np.log(w[list(t)]))) for t in trees)))
        rows.append(("matrix_tree", ref, f1, abs(f1 - ref) / max(1.0, abs(ref)),
                     float(np.exp(f2 - f1)), abs(f1 - ref) <= 1e-8 * max(1.0, abs(ref))))
    for p in (5, 20):
        r = gr.effective_resistances(gr.complete(p))
        rows.append(("resistance_complete", 2.0 / p, float(r[0]),
                     float(abs(r[0] - 2.0 / p)), 1.0, bool(abs(r[0] - 2.0 / p) <= 1e-10)))
        r = gr.effective_resistances(gr.chain(p))
        rows.append(("resistance_tree", 1.0, float(r[0]),
                     float(abs(r[0] - 1.0)), 1.0, bool(abs(r[0] - 1.0) <= 1e-10)))
    return rows


def cmd_oracle(cfg: dict) -> int:
    rows = _oracle_rows(int(cfg.get("seed", 0)))
    _write_csv(
        _out_dir(cfg) / "oracle_report.csv",
        ["quantity", "reference", "value", "rel_error", "bound_accuracy", "passed"],
        rows,
    )
    if not all(r[-1] for r in rows):
        raise NumericError("oracle suite reported failures")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphslab")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config; flags override fields")
        p.add_argument("--model", choices=MODELS)
        p.add_argument("--data")
        p.add_argument("--design", help="design matrix CSV (general model)")
        p.add_argument("--graph", help="chain:p | grid:AxB | complete:p | star:p | complete-bipartite:pxk")
        p.add_argument("--edge-list", dest="edge_list")
        p.add_argument("--v1", type=float)
        p.add_argument("--v0", type=float)
        p.add_argument("--v0-grid", dest="v0_grid", help='"lo:hi:num" (geometric) or comma list')
        p.add_argument("--c-grid", dest="c_grid", help="comma list of column variance scales")
        p.add_argument("--nu", type=float)
        p.add_argument("--a", type=float)
        p.add_argument("--b", type=float)
        p.add_argument("--A", type=float)
        p.add_argument("--B", type=float)
        p.add_argument("--k", type=int)
        p.add_argument("--k1", type=int)
        p.add_argument("--k2", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--mode", choices=("warm", "cold", "serial-warm", "parallel-cold"))

    for name in ("fit", "path", "select"):
        common(sub.add_parser(name))

    sim = sub.add_parser("simulate")
    common(sim)
    sim.add_argument("--design-name", dest="design",
                     choices=("chain", "grid", "checkerboard", "anchor", "clustering-toy"))
    sim.add_argument("--sigma", type=float)
    sim.add_argument("--n", type=int)
    sim.add_argument("--pieces", type=int)
    sim.add_argument("--spacing", choices=("even", "uneven", "very-uneven"))
    sim.add_argument("--gap", type=float)
    sim.add_argument("--kappa", type=float)
    sim.add_argument("--n1", type=int)
    sim.add_argument("--n2", type=int)
    sim.add_argument("--blocks", type=int)

    met = sub.add_parser("metrics")
    common(met)
    met.add_argument("--gamma-hat", dest="gamma_hat")
    met.add_argument("--gamma-star", dest="gamma_star")
    met.add_argument("--beta-hat", dest="beta_hat")
    met.add_argument("--beta-star", dest="beta_star")

    common(sub.add_parser("oracle"))
    return parser


_DISPATCH = {
    "fit": cmd_fit,
    "path": cmd_path,
    "select": cmd_select,
    "simulate": cmd_simulate,
    "metrics": cmd_metrics,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _resolve_config(args)
        return _DISPATCH[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NoValidCandidateError as exc:
        print(f"no valid candidate: {exc}", file=sys.stderr)
        return 4
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except GraphSlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

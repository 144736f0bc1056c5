"""Batch experiment runner.

Usage:  fracdev <command> --config <path> [--seed N] [--out DIR]

Commands: sample-fbm, solve, skeleton, rate, clt, ldp, mdp.  Every
artifact embeds the full validated config and a git-style blob hash of
the raw config file, so a run is reproducible from any of its outputs.
Exit codes: 0 success, 2 usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from . import fbm, mc
from . import mckean as mk
from . import rkhs
from ._rng import validate_seed
from .errors import DivergenceError, NumericalError, SingularOperatorError, UnsupportedModelError
from .grids import TimeGrid

COMMANDS = ("sample-fbm", "solve", "skeleton", "rate", "clt", "ldp", "mdp")

EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageError(ValueError):
    """Config or argument violation; message names the offending field."""


# --------------------------------------------------------------------------
# config validation
# --------------------------------------------------------------------------


def _fail(field: str, msg: str):
    raise UsageError(f"{field}: {msg}")


def _need(cfg: dict, field: str, kind, check=None, msg: str = "invalid value"):
    if field not in cfg:
        _fail(field, "missing required field")
    val = cfg[field]
    if kind is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, kind):
        _fail(field, f"expected {getattr(kind, '__name__', kind)}")
    if check is not None and not check(val):
        _fail(field, msg)
    return val


def _optional(cfg: dict, field: str, default, kind, check=None, msg: str = "invalid value"):
    if field not in cfg:
        cfg[field] = default
        return default
    return _need(cfg, field, kind, check, msg)


def validate_config(cfg: dict, command: str) -> dict:
    """Validate and normalize a config dict; raises UsageError naming the field."""
    if not isinstance(cfg, dict):
        raise UsageError("config: expected a JSON object")
    cfg = dict(cfg)
    _need(cfg, "H", float, lambda v: 0.5 < v < 1.0, "must satisfy 1/2 < H < 1")
    _optional(cfg, "T", 1.0, float, lambda v: v > 0, "must be positive")
    _need(cfg, "n_steps", int, lambda v: v >= 16, "must be >= 16")
    seed = _optional(cfg, "seed", 0, int)
    try:
        validate_seed(seed)
    except ValueError as exc:
        _fail("seed", str(exc))
    _optional(cfg, "workers", 1, int, lambda v: v >= 1, "must be >= 1")
    _optional(cfg, "out", "runs", str)

    model = _optional(cfg, "model", {"name": "pure_noise", "params": {}}, dict)
    name = model.get("name")
    if name not in mk.MODEL_FACTORIES:
        _fail("model.name", f"unknown model; known: {sorted(mk.MODEL_FACTORIES)}")
    params = model.setdefault("params", {})
    if not isinstance(params, dict):
        _fail("model.params", "expected an object")
    try:
        m = mk.make_model(name, **params)
    except TypeError as exc:
        _fail("model.params", str(exc))
    _optional(cfg, "x0", [0.0] * m.dim, list)
    if len(cfg["x0"]) != m.dim:
        _fail("x0", f"model '{name}' has dimension {m.dim}")

    if command in ("sample-fbm", "solve", "clt", "ldp", "mdp"):
        _need(cfg, "n_paths", int, lambda v: v >= 1, "must be >= 1")
    if command == "sample-fbm":
        _optional(cfg, "dim", 1, int, lambda v: v >= 1, "must be >= 1")
        _optional(cfg, "sampler", "volterra", str,
                  lambda v: v in ("volterra", "cholesky"), "must be 'volterra' or 'cholesky'")
    if command == "solve":
        _need(cfg, "eps", float, lambda v: v >= 0, "must be >= 0")
        _optional(cfg, "p", 2.0, float, lambda v: v > 0, "must be positive")
    if command in ("clt", "ldp", "mdp"):
        eps_list = _need(cfg, "eps_list", list, lambda v: len(v) >= 1, "must be nonempty")
        vals = [float(e) for e in eps_list]
        if any(e <= 0 for e in vals):
            _fail("eps_list", "entries must be positive")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            _fail("eps_list", "must be strictly decreasing")
    if command == "clt":
        _optional(cfg, "p", 2.0, float, lambda v: v > 0, "must be positive")
        _optional(cfg, "couple", True, bool)
    if command in ("ldp", "mdp"):
        _need(cfg, "a", float, lambda v: v > 0, "must be positive")
        _optional(cfg, "coordinate", 0, int, lambda v: v >= 0, "must be >= 0")
    if command == "mdp":
        kappa = _optional(cfg, "kappa", {"kind": "power"}, dict)
        if kappa.get("kind") not in ("power", "log"):
            _fail("kappa.kind", "must be 'power' or 'log'")
    if command == "skeleton":
        _optional(cfg, "regime", "ldp", str,
                  lambda v: v in ("ldp", "mdp"), "must be 'ldp' or 'mdp'")
        ctrl = _optional(cfg, "control", {"kind": "zero"}, dict)
        if ctrl.get("kind") not in ("zero", "constant", "sine"):
            _fail("control.kind", "must be 'zero', 'constant' or 'sine'")
    if command == "rate":
        query = _need(cfg, "query", dict)
        kind = query.get("kind")
        if kind not in ("endpoint", "path"):
            _fail("query.kind", "must be 'endpoint' or 'path'")
        if kind == "endpoint":
            if "a" not in query:
                _fail("query.a", "missing required field")
            if query.get("regime", "ldp") not in ("ldp", "mdp"):
                _fail("query.regime", "must be 'ldp' or 'mdp'")
        else:
            if "values" not in query or not isinstance(query["values"], list):
                _fail("query.values", "expected a list of node states")
    return cfg


def _kappa_from_cfg(cfg: dict):
    spec = cfg.get("kappa", {"kind": "power"})
    return asy.make_kappa(spec.get("kind", "power"), H=cfg["H"], exponent=spec.get("exponent"))


def _control_from_cfg(cfg: dict, grid: TimeGrid, dim: int) -> rkhs.ControlL2:
    spec = cfg.get("control", {"kind": "zero"})
    kind = spec.get("kind", "zero")
    scale = float(spec.get("scale", 1.0))
    mids = grid.cell_midpoints
    if kind == "zero":
        g = np.zeros((grid.n_steps, dim))
    elif kind == "constant":
        g = np.full((grid.n_steps, dim), scale)
    else:
        freq = float(spec.get("frequency", 1.0))
        g = scale * np.sin(2 * np.pi * freq * mids / grid.horizon)[:, None] * np.ones((1, dim))
    return rkhs.ControlL2(grid, g)


# --------------------------------------------------------------------------
# artifact writers
# --------------------------------------------------------------------------


def git_blob_sha1(data: bytes) -> str:
    h = hashlib.sha1()
    h.update(b"blob %d\x00" % len(data))
    h.update(data)
    return h.hexdigest()


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


class ArtifactWriter:
    """Writes CSV/JSON artifacts inside one output directory, each
    embedding the validated config and the hash of the raw config file."""

    def __init__(self, out_dir: Path, cfg: dict, cfg_hash: str):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.cfg_hash = cfg_hash

    def csv(self, name: str, header: list[str], rows) -> Path:
        path = self.out_dir / name
        lines = [
            f"# config_hash={self.cfg_hash}",
            "# config=" + json.dumps(self.cfg, sort_keys=True),
            ",".join(header),
        ]
        for row in rows:
            lines.append(",".join(_fmt(x) for x in row))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def json(self, name: str, payload: dict) -> Path:
        path = self.out_dir / name
        doc = {"config": self.cfg, "config_hash": self.cfg_hash, **payload}
        path.write_text(json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n",
                        encoding="utf-8")
        return path


def _ensemble_rows(grid: TimeGrid, paths: np.ndarray):
    nodes = grid.nodes
    n_paths, n_nodes, d = paths.shape
    for i in range(n_paths):
        for k in range(n_nodes):
            yield (i, k, nodes[k], *paths[i, k])


def _scaling_csv(writer: ArtifactWriter, name: str, rep: mc.ScalingReport, n: int):
    rows = [
        (e, m, s, n, rep.slope, rep.slope_ci[0], rep.slope_ci[1], rep.expected_slope)
        for e, (m, s) in zip(rep.eps_list, rep.estimates)
    ]
    writer.csv(name, ["eps", "estimate", "se", "n", "slope", "ci_lo", "ci_hi", "expected"], rows)


def _tail_csv(writer: ArtifactWriter, name: str, reports: list[mc.TailReport]):
    rows = [
        (r.eps, r.p_hat, r.hit_count, r.n_paths, r.speed, r.log_p_scaled,
         r.rate_prediction, int(r.reliable))
        for r in reports
    ]
    writer.csv(
        name,
        ["eps", "p_hat", "hit_count", "n_paths", "speed", "log_p_scaled",
         "rate_prediction", "reliable"],
        rows,
    )


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _cmd_sample_fbm(cfg, writer):
    grid = TimeGrid(cfg["T"], cfg["n_steps"])
    H, dim, n, seed = cfg["H"], cfg["dim"], cfg["n_paths"], cfg["seed"]
    sampler = fbm.sample_volterra if cfg["sampler"] == "volterra" else fbm.sample_cholesky
    ens = sampler(H, grid, dim, n, seed)
    writer.csv(
        "fbm_paths.csv",
        ["path", "node", "t"] + [f"x{i}" for i in range(dim)],
        _ensemble_rows(grid, ens.values),
    )
    R = fbm.covariance_matrix(H, grid)
    se = np.sqrt((np.outer(np.diag(R), np.diag(R)) + R ** 2) / n)
    flat = ens.values[:, 1:, :].transpose(0, 2, 1).reshape(n * dim, grid.n_steps)
    emp = flat.T @ flat / (n * dim)
    z = np.abs(emp - R) / se
    writer.json(
        "covariance_check.json",
        {
            "sampler": cfg["sampler"],
            "max_abs_z": float(z.max()),
            "mean_abs_z": float(z.mean()),
            "n_entries": int(z.size),
            "within_5se": bool(z.max() < 5.0),
        },
    )


def _cmd_solve(cfg, writer):
    grid = TimeGrid(cfg["T"], cfg["n_steps"])
    model = mk.make_model(cfg["model"]["name"], **cfg["model"]["params"])
    ens = mk.solve_mckean(model, cfg["x0"], cfg["eps"], cfg["H"], grid,
                          cfg["n_paths"], cfg["seed"])
    writer.csv(
        "ensemble.csv",
        ["path", "node", "t"] + [f"x{i}" for i in range(model.dim)],
        _ensemble_rows(grid, ens.paths),
    )
    base = mk.limit_ode(model, cfg["x0"], grid)
    mean, se = mc.moment_sup(ens, base, cfg["p"])
    writer.json(
        "moments.json",
        {"eps": cfg["eps"], "p": cfg["p"], "sup_moment": mean, "sup_moment_se": se},
    )


def _cmd_skeleton(cfg, writer):
    grid = TimeGrid(cfg["T"], cfg["n_steps"])
    model = mk.make_model(cfg["model"]["name"], **cfg["model"]["params"])
    ctrl = _control_from_cfg(cfg, grid, model.dim)
    solver = asy.skeleton_ldp if cfg["regime"] == "ldp" else asy.skeleton_mdp
    sol = solver(model, cfg["x0"], cfg["H"], ctrl, grid)
    writer.csv(
        "skeleton.csv",
        ["node", "t"] + [f"x{i}" for i in range(model.dim)],
        ((k, grid.nodes[k], *sol.path.values[k]) for k in range(grid.n_steps + 1)),
    )
    writer.json("skeleton.json", {"regime": cfg["regime"], "cost": sol.cost})


def _cmd_rate(cfg, writer):
    grid = TimeGrid(cfg["T"], cfg["n_steps"])
    model = mk.make_model(cfg["model"]["name"], **cfg["model"]["params"])
    query = cfg["query"]
    if query["kind"] == "endpoint":
        value = asy.rate_endpoint(
            model, cfg["x0"], cfg["H"], grid, float(query["a"]),
            query.get("regime", "ldp"), int(query.get("coordinate", 0)),
        )
    else:
        from .grids import SamplePath

        values = np.asarray(query["values"], dtype=float)
        value = asy.rate_ldp_path(model, cfg["x0"], cfg["H"], SamplePath(grid, values))
    writer.json("rate.json", {"query": query, "value": value,
                              "grid": {"T": cfg["T"], "n_steps": cfg["n_steps"]},
                              "model": cfg["model"]["name"]})


def _pool_map(workers: int, fn, items):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _cmd_clt(cfg, writer):
    grid = TimeGrid(cfg["T"], cfg["n_steps"])
    model = mk.make_model(cfg["model"]["name"], **cfg["model"]["params"])
    rep = mc.clt_error_curve(
        model, cfg["x0"], [float(e) for e in cfg["eps_list"]], cfg["p"],
        cfg["H"], grid, cfg["n_paths"], cfg["seed"], couple=cfg["couple"],
    )
    _scaling_csv(writer, "clt_error.csv", rep, cfg["n_paths"])
    writer.json(
        "clt_report.json",
        {
            "eps_list": rep.eps_list,
            "estimates": rep.estimates,
            "slope": rep.slope,
            "slope_ci": list(rep.slope_ci),
            "expected_slope": rep.expected_slope,
            "coupled": cfg["couple"],
        },
    )


def _tail_payload(reports):
    return [
        {
            "eps": r.eps, "threshold": r.threshold, "hit_count": r.hit_count,
            "n_paths": r.n_paths, "p_hat": r.p_hat, "speed": r.speed,
            "log_p_scaled": r.log_p_scaled, "rate_prediction": r.rate_prediction,
            "reliable": r.reliable,
        }
        for r in reports
    ]


def _cmd_ldp(cfg, writer):
    grid = TimeGrid(cfg["T"], cfg["n_steps"])
    model = mk.make_model(cfg["model"]["name"], **cfg["model"]["params"])
    eps_list = [float(e) for e in cfg["eps_list"]]
    n, seed, coord, a, H = cfg["n_paths"], cfg["seed"], cfg["coordinate"], cfg["a"], cfg["H"]
    rate = asy.rate_endpoint(model, cfg["x0"], H, grid, a, "ldp", coord)

    def cell(i_eps):
        i, eps = i_eps
        hits = mc._endpoint_hits(model, cfg["x0"], eps, H, grid, n, seed, i * n, a, coord)
        return mc._tail_report(eps, a, hits, n, eps ** (2 * H), rate)

    reports = _pool_map(cfg["workers"], cell, list(enumerate(eps_list)))
    _tail_csv(writer, "ldp_tails.csv", reports)
    writer.json("ldp_report.json", {"reports": _tail_payload(reports)})


def _cmd_mdp(cfg, writer):
    grid = TimeGrid(cfg["T"], cfg["n_steps"])
    model = mk.make_model(cfg["model"]["name"], **cfg["model"]["params"])
    eps_list = [float(e) for e in cfg["eps_list"]]
    H = cfg["H"]
    mdp_cfg = asy.MdpConfig(_kappa_from_cfg(cfg), eps_list, H)
    n, seed, coord, a = cfg["n_paths"], cfg["seed"], cfg["coordinate"], cfg["a"]
    rate = asy.rate_endpoint(model, cfg["x0"], H, grid, a, "mdp", coord)
    from .mckean import limit_ode

    def cell(i_eps):
        i, eps = i_eps
        kappa = mdp_cfg.kappa(eps)
        scale = eps ** H * kappa
        hits = mc._endpoint_hits(model, cfg["x0"], eps, H, grid, n, seed, i * n,
                                 a * scale, coord)
        return mc._tail_report(eps, a, hits, n, kappa ** -2, rate)

    reports = _pool_map(cfg["workers"], cell, list(enumerate(eps_list)))
    _tail_csv(writer, "mdp_tails.csv", reports)
    writer.json("mdp_report.json", {"reports": _tail_payload(reports)})


_HANDLERS = {
    "sample-fbm": _cmd_sample_fbm,
    "solve": _cmd_solve,
    "skeleton": _cmd_skeleton,
    "rate": _cmd_rate,
    "clt": _cmd_clt,
    "ldp": _cmd_ldp,
    "mdp": _cmd_mdp,
}


def run(command: str, config_path: str, seed: int | None = None, out: str | None = None) -> int:
    """Execute one command; returns the process exit code."""
    if command not in _HANDLERS:
        print(f"usage: unknown command '{command}'", file=sys.stderr)
        return EXIT_USAGE
    try:
        raw = Path(config_path).read_bytes()
    except OSError as exc:
        print(f"usage: config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        print(f"usage: config: not valid JSON ({exc})", file=sys.stderr)
        return EXIT_USAGE
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out"] = out
    try:
        cfg = validate_config(cfg, command)
    except UsageError as exc:
        print(f"usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    writer = ArtifactWriter(Path(cfg["out"]), cfg, git_blob_sha1(raw))
    try:
        _HANDLERS[command](cfg, writer)
    except DivergenceError as exc:
        print(f"numerical: diverged at step {exc.step}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SingularOperatorError, NumericalError) as exc:
        print(f"numerical: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UnsupportedModelError, UsageError, ValueError) as exc:
        print(f"usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fracdev", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to a JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    return run(args.command, args.config, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())

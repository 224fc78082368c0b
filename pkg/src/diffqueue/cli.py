"""Batch front end: config parsing, experiment orchestration, table output.

One process runs one experiment.  A JSON config file (flat keys, strict:
unknown keys are rejected) plus command-line overrides produce a fully
resolved configuration whose SHA-256 digest is embedded, together with
the master seed, in every emitted file; re-running a command with the
same config and seed reproduces the output byte for byte.

Exit codes: 0 success, 1 configuration error, 2 runtime/numeric error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import ctmc, sde, stats
from .errors import ConfigurationError, DiffQueueError, NumericsError, ReplicaError
from .model import ModelParams, delta_rows
from .rng import mix64
from .testfuncs import build_family

__all__ = ["ExperimentConfig", "parse_config", "main"]

DEFAULTS = {
    "grid_points": 1000,
    "h": 1e-3,
    "replicas": 1000,
    "master_seed": 0,
    "n_list": [],
    "gamma": None,
    "x0": None,
    "eps_ladder": [0.4, 0.2, 0.1, 0.05],
    "format": "csv",
    "out": None,
}
REQUIRED = ("d", "alpha", "mu0", "mu", "nu", "n", "T")

# fixed tags deriving independent sub-experiment seeds from the master seed
_TAG_QUEUE = 0x71C3
_TAG_SDE_REF = 0x5DE1
_TAG_SDE_SELF = 0x5DE2


@dataclass(frozen=True)
class ExperimentConfig:
    d: int
    alpha: list
    mu0: float
    mu: list
    nu: list
    n: int
    T: float
    grid_points: int
    h: float
    replicas: int
    master_seed: int
    n_list: list
    gamma: float | None
    x0: list
    eps_ladder: list
    format: str
    out: str | None

    @property
    def params(self) -> ModelParams:
        return ModelParams(d=self.d, alpha=self.alpha, mu0=self.mu0,
                           mu=self.mu, nu=self.nu, n=self.n)

    def digest(self) -> str:
        # identifies the experiment inputs; presentation fields (format,
        # output path) deliberately do not change the digest
        payload = asdict(self)
        payload.pop("format")
        payload.pop("out")
        canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _fail(name: str, why: str):
    raise ConfigurationError(f"{name}: {why}")


def _check_number(raw: dict, name: str, kind, lo=None, strict=False):
    v = raw[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(name, f"expected a number, got {v!r}")
    if kind is int and not isinstance(v, int):
        _fail(name, f"expected an integer, got {v!r}")
    if lo is not None and (v < lo or (strict and v == lo)):
        _fail(name, f"must be {'>' if strict else '>='} {lo}, got {v}")
    return kind(v)


def _check_vector(raw: dict, name: str, d: int, lo=None, strict=False) -> list:
    v = raw[name]
    if not isinstance(v, list) or len(v) != d:
        _fail(name, f"expected a list of {d} numbers, got {v!r}")
    out = []
    for i, item in enumerate(v):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            _fail(f"{name}[{i}]", f"expected a number, got {item!r}")
        if lo is not None and (item < lo or (strict and item == lo)):
            _fail(f"{name}[{i}]", f"must be {'>' if strict else '>='} {lo}, got {item}")
        out.append(float(item))
    return out


def parse_config(path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Load, merge, and validate an experiment configuration.

    ``overrides`` (typically from flags) take precedence over the file;
    missing optional fields get documented defaults.  Unknown keys and
    out-of-domain values are rejected with the offending field named.
    """
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError("config file must hold a JSON object")

    known = set(REQUIRED) | set(DEFAULTS)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigurationError(f"missing required config fields: {', '.join(missing)}")
    for key, default in DEFAULTS.items():
        raw.setdefault(key, default)

    d = _check_number(raw, "d", int, lo=1)
    resolved = dict(
        d=d,
        alpha=_check_vector(raw, "alpha", d, lo=0, strict=True),
        mu0=_check_number(raw, "mu0", float, lo=0),
        mu=_check_vector(raw, "mu", d, lo=0),
        nu=_check_vector(raw, "nu", d),
        n=_check_number(raw, "n", int, lo=1),
        T=_check_number(raw, "T", float, lo=0, strict=True),
        grid_points=_check_number(raw, "grid_points", int, lo=1),
        h=_check_number(raw, "h", float, lo=0, strict=True),
        replicas=_check_number(raw, "replicas", int, lo=1),
        master_seed=_check_number(raw, "master_seed", int, lo=0),
    )
    if resolved["master_seed"] >= 1 << 64:
        _fail("master_seed", "must fit in 64 bits")
    if resolved["h"] > resolved["T"]:
        _fail("h", f"must not exceed T={resolved['T']}")

    n_list = raw["n_list"]
    if not isinstance(n_list, list):
        _fail("n_list", f"expected a list of integers, got {n_list!r}")
    for i, item in enumerate(n_list):
        if isinstance(item, bool) or not isinstance(item, int) or item < 1:
            _fail(f"n_list[{i}]", f"expected a positive integer, got {item!r}")
    resolved["n_list"] = list(n_list)

    gamma = raw["gamma"]
    if gamma is not None:
        if isinstance(gamma, bool) or not isinstance(gamma, (int, float)) or gamma < 0:
            _fail("gamma", f"expected a number >= 0, got {gamma!r}")
        gamma = float(gamma)
    resolved["gamma"] = gamma

    if raw["x0"] is None:
        raw["x0"] = [0.0] * d
    resolved["x0"] = _check_vector(raw, "x0", d)

    ladder = raw["eps_ladder"]
    if not isinstance(ladder, list) or not ladder:
        _fail("eps_ladder", f"expected a nonempty list, got {ladder!r}")
    resolved["eps_ladder"] = _check_vector({"eps_ladder": ladder}, "eps_ladder",
                                           len(ladder), lo=0, strict=True)

    fmt = raw["format"]
    if fmt not in ("csv", "json"):
        _fail("format", f"must be 'csv' or 'json', got {fmt!r}")
    resolved["format"] = fmt
    out = raw["out"]
    if out is not None and not isinstance(out, str):
        _fail("out", f"expected a path string, got {out!r}")
    resolved["out"] = out

    return ExperimentConfig(**resolved)


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _native(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


def emit(rows: list[dict], columns: list[str], cfg: ExperimentConfig) -> None:
    """Write one table in the configured format, embedding seed and digest."""
    digest = cfg.digest()
    if cfg.format == "csv":
        header = columns + ["master_seed", "config_digest"]
        lines = [",".join(header)]
        for row in rows:
            cells = [_fmt(row[c]) for c in columns]
            cells += [str(cfg.master_seed), digest]
            lines.append(",".join(cells))
        text = "\n".join(lines) + "\n"
    else:
        body = {
            "config_digest": digest,
            "seed": cfg.master_seed,
            "results": [{c: _native(row[c]) for c in columns} for row in rows],
        }
        text = json.dumps(body, sort_keys=True, indent=2) + "\n"
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# experiment drivers


def _queue_path_ensemble(cfg: ExperimentConfig, params: ModelParams,
                         master: int) -> stats.Ensemble:
    occupancy = cfg.gamma if cfg.gamma is not None else 1.0
    q0 = ctmc.initial_state(params, cfg.x0, occupancy=occupancy)
    centering = ctmc.alt_centering(cfg.gamma) if cfg.gamma is not None else None

    def one(k, seed):
        raw = ctmc.simulate_queue_on_grid(params, q0, cfg.T, seed, cfg.grid_points)
        return ctmc.scale(raw, params, centering=centering)

    return stats.run_ensemble(one, cfg.replicas, master, meta=cfg.digest())


def _sde_spec(cfg: ExperimentConfig, params: ModelParams) -> sde.SdeSpec:
    if cfg.gamma is not None:
        return sde.alt_scaling_sde(params, cfg.gamma)
    return sde.limit_sde(params)


def _path_table(times, values_by_replica, cfg, per_replica: bool):
    d = values_by_replica.shape[2]
    rows = []
    if per_replica:
        columns = ["replica", "t"] + [f"x{i}" for i in range(d)]
        for k in range(values_by_replica.shape[0]):
            for j, t in enumerate(times):
                row = {"replica": k, "t": t}
                row.update({f"x{i}": values_by_replica[k, j, i] for i in range(d)})
                rows.append(row)
        return rows, columns
    columns = ["t"] + [f"mean{i}" for i in range(d)] + [f"var{i}" for i in range(d)] \
        + [f"se{i}" for i in range(d)]
    m = values_by_replica.shape[0]
    mean = values_by_replica.mean(axis=0)
    if m > 1:
        var = values_by_replica.var(axis=0, ddof=1)
    else:
        var = np.zeros_like(mean)
    se = np.sqrt(var / m)
    for j, t in enumerate(times):
        row = {"t": t}
        row.update({f"mean{i}": mean[j, i] for i in range(d)})
        row.update({f"var{i}": var[j, i] for i in range(d)})
        row.update({f"se{i}": se[j, i] for i in range(d)})
        rows.append(row)
    return rows, columns


def cmd_simulate_queue(cfg: ExperimentConfig, per_replica: bool) -> None:
    params = cfg.params
    ensemble = _queue_path_ensemble(cfg, params, cfg.master_seed)
    times, values = ensemble.path_matrix()
    rows, columns = _path_table(times, values, cfg, per_replica)
    emit(rows, columns, cfg)


def cmd_simulate_sde(cfg: ExperimentConfig, per_replica: bool) -> None:
    params = cfg.params
    spec = _sde_spec(cfg, params)
    result = sde.em_ensemble(spec, cfg.x0, cfg.T, cfg.h, cfg.replicas,
                             cfg.master_seed, store_paths=True)
    rows, columns = _path_table(result.times, result.paths, cfg, per_replica)
    emit(rows, columns, cfg)


def cmd_fluid(cfg: ExperimentConfig) -> None:
    params = cfg.params
    fp = sde.FluidParams(beta=1.0 / params.alpha, q0=cfg.x0)
    path = sde.fluid_ode(fp, cfg.T, cfg.h)
    columns = ["t"] + [f"q{i}" for i in range(params.d)]
    rows = [{"t": t, **{f"q{i}": path.values[j, i] for i in range(params.d)}}
            for j, t in enumerate(path.times)]
    emit(rows, columns, cfg)


def cmd_compare(cfg: ExperimentConfig) -> None:
    if not cfg.n_list:
        raise ConfigurationError("compare needs a nonempty n_list")
    params = cfg.params
    m = cfg.replicas
    floor = stats.ks_noise_floor(m)

    ref = sde.em_ensemble(sde.limit_sde(params), cfg.x0, cfg.T, cfg.h, m,
                          mix64(cfg.master_seed, _TAG_SDE_REF)).terminal
    self_ref = sde.em_ensemble(sde.limit_sde(params), cfg.x0, cfg.T, cfg.h, m,
                               mix64(cfg.master_seed, _TAG_SDE_SELF)).terminal

    columns = ["kind", "n"] + [f"ks{i}" for i in range(params.d)] + ["ks_max", "noise_floor"]
    rows = []
    for j, n_j in enumerate(cfg.n_list):
        p_n = params.with_n(n_j)
        q0 = ctmc.initial_state(p_n, cfg.x0)

        def one(k, seed, p=p_n, q=q0):
            raw = ctmc.simulate_queue_on_grid(p, q, cfg.T, seed, 1)
            return ctmc.scale(raw, p).values[-1]

        ens = stats.run_ensemble(one, m, mix64(cfg.master_seed, _TAG_QUEUE + j))
        per, ks_max = stats.ks_distance_columns(ens.terminal_matrix(), ref)
        row = {"kind": "queue_vs_sde", "n": n_j, "ks_max": ks_max, "noise_floor": floor}
        row.update({f"ks{i}": per[i] for i in range(params.d)})
        rows.append(row)
    per, ks_max = stats.ks_distance_columns(self_ref, ref)
    row = {"kind": "sde_self", "n": 0, "ks_max": ks_max, "noise_floor": floor}
    row.update({f"ks{i}": per[i] for i in range(params.d)})
    rows.append(row)
    emit(rows, columns, cfg)


def cmd_occupation(cfg: ExperimentConfig, source: str) -> None:
    params = cfg.params
    if source == "sde":
        result = sde.em_ensemble(sde.limit_sde(params), cfg.x0, cfg.T, cfg.h,
                                 cfg.replicas, cfg.master_seed, store_paths=True)
        paths = [ctmc.SamplePath(times=result.times, values=result.paths[k])
                 for k in range(cfg.replicas)]
    else:
        q0 = ctmc.initial_state(params, cfg.x0)

        def one(k, seed):
            raw = ctmc.simulate_queue_on_grid(params, q0, cfg.T, seed, cfg.grid_points)
            return ctmc.scale(raw, params)

        paths = stats.run_ensemble(one, cfg.replicas, cfg.master_seed).replicas
    rows = []
    for eps in cfg.eps_ladder:
        fracs = np.array([stats.occupation_near_G(p, params, eps) for p in paths])
        rows.append({"eps": eps, "fraction": float(fracs.mean()),
                     "se": float(fracs.std(ddof=1) / np.sqrt(len(fracs)))
                     if len(fracs) > 1 else 0.0})
    emit(rows, ["eps", "fraction", "se"], cfg)


def cmd_martingale_check(cfg: ExperimentConfig, source: str, coeff_source: str) -> None:
    params = cfg.params
    if source == "sde":
        ensemble = sde.em_ensemble(sde.limit_sde(params), cfg.x0, cfg.T, cfg.h,
                                   cfg.replicas, cfg.master_seed, store_paths=True)
    else:
        ensemble = _queue_path_ensemble(cfg, params, cfg.master_seed)
    coeffs = (stats.limit_coeffs(params) if coeff_source == "limit"
              else stats.prelimit_coeff_fns(params))
    s, t = cfg.T / 2.0, cfg.T
    rows = []
    for u in build_family(params.d):
        report = stats.martingale_residual(ensemble, u, s, t, coeffs=coeffs)
        rows.append({
            "test_function": report.test_function_id,
            "estimate": report.estimate,
            "std_error": report.std_error,
            "M": report.M,
            "within_3se": report.within(),
        })
    emit(rows, ["test_function", "estimate", "std_error", "M", "within_3se"], cfg)


def cmd_krylov_check(cfg: ExperimentConfig, radius: float) -> None:
    params = cfg.params
    ensemble = sde.em_ensemble(sde.limit_sde(params), cfg.x0, cfg.T, cfg.h,
                               cfg.replicas, cfg.master_seed, store_paths=True)
    rows = []
    for eps in cfg.eps_ladder:
        res = stats.krylov_ratio(ensemble, params, eps, radius, cfg.T)
        ratio = res.lhs / res.rhs if res.rhs > 0 else 0.0
        rows.append({"eps": eps, "lhs": res.lhs, "rhs": res.rhs,
                     "ratio": ratio, "lhs_se": res.lhs_se})
    emit(rows, ["eps", "lhs", "rhs", "ratio", "lhs_se"], cfg)


def cmd_functional(cfg: ExperimentConfig) -> None:
    params = cfg.params
    q0 = ctmc.initial_state(params, cfg.x0)

    def routing(xs):
        return delta_rows(np.atleast_2d(xs), params.alpha)

    def one(k, seed):
        path = ctmc.simulate_queue(params, q0, cfg.T, seed)
        y = ctmc.functional_integral(path, routing, params,
                                     grid=np.array([0.0, cfg.T]))
        return y.values[-1]

    queue_ens = stats.run_ensemble(one, cfg.replicas, mix64(cfg.master_seed, _TAG_QUEUE))
    sde_result = sde.em_ensemble(sde.limit_sde(params), cfg.x0, cfg.T, cfg.h,
                                 cfg.replicas, mix64(cfg.master_seed, _TAG_SDE_REF),
                                 functional=routing)
    columns = ["side", "replica"] + [f"y{i}" for i in range(params.d)] + ["y_sum"]
    rows = []
    for side, matrix in (("queue", queue_ens.terminal_matrix()),
                         ("sde", sde_result.functional)):
        for k in range(matrix.shape[0]):
            row = {"side": side, "replica": k, "y_sum": float(matrix[k].sum())}
            row.update({f"y{i}": matrix[k, i] for i in range(params.d)})
            rows.append(row)
    emit(rows, columns, cfg)


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffqueue",
        description="Queueing-network diffusion-limit simulator and verification harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    names = ["simulate-queue", "simulate-sde", "fluid", "compare", "occupation",
             "martingale-check", "krylov-check", "functional"]
    for name in names:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, dest="master_seed", help="64-bit master seed")
        p.add_argument("--replicas", type=int, help="Monte Carlo replicas M")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=["csv", "json"])
        p.add_argument("--grid", type=int, dest="grid_points", help="grid cells")
        p.add_argument("--step", type=float, dest="h", help="EM / ODE step size")
        p.add_argument("--n-list", dest="n_list", help="comma-separated scales")
        p.add_argument("--gamma", type=float, help="initial-occupancy ratio")
        p.add_argument("--eps-ladder", dest="eps_ladder", help="comma-separated widths")
        if name in ("simulate-queue", "simulate-sde"):
            p.add_argument("--per-replica", action="store_true",
                           help="emit every replica path instead of a summary")
        if name == "occupation":
            p.add_argument("--source", choices=["sde", "queue"], default="sde")
        if name == "martingale-check":
            p.add_argument("--source", choices=["sde", "queue"], default="sde")
            p.add_argument("--coeff-source", choices=["limit", "prelimit"],
                           default="limit")
        if name == "krylov-check":
            p.add_argument("--radius", type=float, default=3.0,
                           help="ball radius for the exit time")
    return parser


def _overrides_from(args: argparse.Namespace) -> dict:
    def ints(text):
        return [int(x) for x in text.split(",") if x.strip()]

    def floats(text):
        return [float(x) for x in text.split(",") if x.strip()]

    try:
        n_list = ints(args.n_list) if args.n_list else None
        ladder = floats(args.eps_ladder) if args.eps_ladder else None
    except ValueError as exc:
        raise ConfigurationError(f"bad list flag: {exc}") from exc
    return {
        "master_seed": args.master_seed,
        "replicas": args.replicas,
        "out": args.out,
        "format": args.format,
        "grid_points": args.grid_points,
        "h": args.h,
        "n_list": n_list,
        "gamma": args.gamma,
        "eps_ladder": ladder,
    }


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, _overrides_from(args))
        if args.command == "simulate-queue":
            cmd_simulate_queue(cfg, args.per_replica)
        elif args.command == "simulate-sde":
            cmd_simulate_sde(cfg, args.per_replica)
        elif args.command == "fluid":
            cmd_fluid(cfg)
        elif args.command == "compare":
            cmd_compare(cfg)
        elif args.command == "occupation":
            cmd_occupation(cfg, args.source)
        elif args.command == "martingale-check":
            cmd_martingale_check(cfg, args.source, args.coeff_source)
        elif args.command == "krylov-check":
            cmd_krylov_check(cfg, args.radius)
        elif args.command == "functional":
            cmd_functional(cfg)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NumericsError, ReplicaError, DiffQueueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

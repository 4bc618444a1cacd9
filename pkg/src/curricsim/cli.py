"""curricsim command-line interface.

Exit codes: 0 ok, 2 invalid config, 3 file-system error, 4 mismatched runs,
5 domain error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import artifacts
from .dt import DtStudy, LogisticCurve, curve_from_params, default_eval_time
from .errors import ConfigError, DomainError, MismatchError
from .metrics import has_forgetting_cycle, max_drawdown
from .sim import TREATMENTS, RunConfig

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_MISMATCH, EXIT_DOMAIN = 0, 2, 3, 4, 5
OUT_ENV = "CURRICSIM_OUT"


def _out_root(arg: str | None, default: str) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or default)


def _resolve(args: argparse.Namespace) -> RunConfig:
    cfg = artifacts.load_config(args.config)
    if getattr(args, "treatment", None):
        if args.treatment not in TREATMENTS:
            raise ConfigError(f"unknown treatment {args.treatment!r}; expected one of "
                              f"{sorted(TREATMENTS)}", "--treatment")
        cfg = cfg.replace(treatment=TREATMENTS[args.treatment])
    if getattr(args, "rounds", None) is not None:
        if args.rounds < 1:
            raise ConfigError("must be >= 1", "--rounds")
        cfg = cfg.replace(rounds=args.rounds)
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("must be an unsigned 64-bit integer", "--seed")
        cfg = cfg.replace(seed=args.seed)
    return cfg


def run_name(cfg: RunConfig) -> str:
    base = f"{cfg.treatment.name}-seed{cfg.seed}"
    return f"{cfg.name}-{base}" if cfg.name else base


def execute(cfg: RunConfig, out_dir: Path) -> Path:
    started = artifacts.utc_now()
    record = cfg.run()
    return artifacts.write_run(record, cfg, out_dir, started)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    out = _out_root(args.out, "runs") / (args.name or run_name(cfg))
    path = execute(cfg, out)
    print(path)
    return EXIT_OK


def _write_matrix(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _unique_names(runs) -> list[str]:
    seen: dict[str, int] = {}
    names = []
    for r in runs:
        k = seen.get(r.name, 0)
        seen[r.name] = k + 1
        names.append(r.name if k == 0 else f"{r.name}.{k}")
    return names


def compare_runs(run_dirs: Sequence[str], out_dir: Path) -> str:
    if len(run_dirs) < 2:
        raise ConfigError("compare needs at least two run directories", "run_dirs")
    runs = [artifacts.read_run(d) for d in run_dirs]
    ref = runs[0]
    for r in runs[1:]:
        if r.fingerprint != ref.fingerprint:
            raise MismatchError(f"task graph of {r.path} differs from {ref.path}")
        if not np.array_equal(r.rounds, ref.rounds):
            raise MismatchError(f"round axis of {r.path} differs from {ref.path}")
    names = _unique_names(runs)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_matrix(out_dir / "compare.csv", ["round", *names],
                  ([int(t), *(int(r.discovered[k]) for r in runs)]
                   for k, t in enumerate(ref.rounds)))
    n_tasks = ref.p_true.shape[1]
    _write_matrix(out_dir / "final_success.csv", ["task_id", *names],
                  ([i, *(repr(float(r.p_true[-1, i])) for r in runs)] for i in range(n_tasks)))
    sampling = out_dir / "sampling"
    sampling.mkdir(exist_ok=True)
    for name, r in zip(names, runs):
        _write_matrix(sampling / f"{name}.csv",
                      ["round", *(f"task_{i}" for i in range(n_tasks))],
                      ([int(t), *(repr(float(v)) for v in r.pi[k])]
                       for k, t in enumerate(r.snapshot_rounds)))
    finals = sorted(((int(r.discovered[-1]), name) for name, r in zip(names, runs)),
                    key=lambda x: -x[0])
    lines = [f"final discovered counts after {int(ref.rounds[-1]) + 1} rounds:"]
    lines += [f"  {count:3d}  {name}" for count, name in finals]
    lines.append("ordering: " + " >= ".join(name for _, name in finals))
    text = "\n".join(lines) + "\n"
    (out_dir / "summary.txt").write_text(text)
    return text


def cmd_compare(args: argparse.Namespace) -> int:
    text = compare_runs(args.run_dirs, _out_root(args.out, "runs") / "compare"
                        if not args.out else Path(args.out))
    print(text, end="")
    return EXIT_OK


def parse_grid(spec: str | None) -> tuple[list[float] | None, float, int]:
    """``log:DECADES:PER_DECADE`` or a comma-separated list of lags."""
    if spec is None:
        return None, 2.0, 25
    try:
        if spec.startswith("log"):
            parts = spec.split(":")
            decades = float(parts[1]) if len(parts) > 1 else 2.0
            per = int(parts[2]) if len(parts) > 2 else 25
            if decades <= 0 or per < 1:
                raise ValueError
            return None, decades, per
        return [float(v) for v in spec.split(",") if v.strip()], 2.0, 25
    except (ValueError, IndexError):
        raise ConfigError(f"cannot parse grid {spec!r}", "--grid") from None


def _load_curve(args: argparse.Namespace):
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: "
                              f"{exc.msg}", args.config) from None
        curve_doc = doc.get("curve", doc)
        try:
            curve = curve_from_params(curve_doc)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid curve parameters: {exc}", "curve") from None
        t = doc.get("t")
    else:
        curve = curve_from_params({"family": args.curve}) if args.curve != "logistic" \
            else LogisticCurve()
        t = None
    if args.t is not None:
        t = args.t
    if t is None:
        t = default_eval_time(curve) if isinstance(curve, LogisticCurve) \
            else 0.5 * (curve.t0 + curve.t1)
    return curve, float(t)


def cmd_dtopt(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise ConfigError("must be >= 1", "--n")
    if args.trials < 1:
        raise ConfigError("must be >= 1", "--trials")
    if args.trials == 1:
        print("warning: trials=1 gives no standard error estimate", file=sys.stderr)
    curve, t = _load_curve(args)
    grid, decades, per = parse_grid(args.grid)
    study = DtStudy(curve, t, n=args.n, trials=args.trials, seed=args.seed or 0,
                    decades=decades, per_decade=per, grid=grid, closed_form=args.closed_form)
    result = study.run()
    out = _out_root(args.out, "runs") / "dtopt" if not args.out else Path(args.out)
    csv_path, json_path = artifacts.write_dt_study(result, out)
    print(json.dumps(result["summary"], indent=1))
    print(csv_path)
    return EXIT_OK


def _sweep_job(job: tuple[dict, str]) -> dict:
    doc, out_dir = job
    cfg = RunConfig.from_dict(doc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        artifacts_dir = execute(cfg, Path(out_dir))
    d = artifacts.read_run(artifacts_dir).discovered
    return {"treatment": cfg.treatment.name, "seed": cfg.seed,
            "final_discovered": int(d[-1]), "max_discovered": int(d.max()),
            "max_drawdown": repr(max_drawdown(d)),
            "forgetting_cycle": int(has_forgetting_cycle(d))}


SWEEP_COLUMNS = ("treatment", "seed", "final_discovered", "max_discovered", "max_drawdown",
                 "forgetting_cycle")


def sweep(cfg: RunConfig, treatments: Sequence[str], seeds: Sequence[int], out: Path,
          jobs: int = 1) -> list[dict]:
    """Run every (treatment, seed) pair; results come back in that fixed order."""
    pending = []
    for name in treatments:
        for seed in seeds:
            job_cfg = cfg.replace(treatment=TREATMENTS[name], seed=seed)
            pending.append((job_cfg.to_dict(), str(out / name / f"seed{seed}")))
    out.mkdir(parents=True, exist_ok=True)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_job, pending))
    else:
        rows = [_sweep_job(j) for j in pending]
    _write_matrix(out / "sweep.csv", SWEEP_COLUMNS, ([r[c] for c in SWEEP_COLUMNS] for r in rows))
    return rows


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _resolve(argparse.Namespace(config=args.config, rounds=args.rounds, seed=None,
                                      treatment=None))
    names = args.treatment or ["all"]
    if "all" in names:
        names = list(TREATMENTS)
    for n in names:
        if n not in TREATMENTS:
            raise ConfigError(f"unknown treatment {n!r}", "--treatment")
    try:
        seeds = [int(s) for s in args.seeds.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse seed list {args.seeds!r}", "--seeds") from None
    if args.jobs < 1:
        raise ConfigError("must be >= 1", "--jobs")
    out = _out_root(args.out, "runs") / "sweep" if not args.out else Path(args.out)
    for r in sweep(cfg, names, seeds, out, args.jobs):
        print(f"{r['treatment']:28s} seed {r['seed']:<4d} final {r['final_discovered']:3d} "
              f"max {r['max_discovered']:3d}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curricsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    treatment_help = "one of: " + ", ".join(TREATMENTS)

    r = sub.add_parser("run", help="run one treatment and write its artifacts")
    r.add_argument("--config", required=True, help="run config or manifest (JSON)")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
    r.add_argument("--rounds", type=int)
    r.add_argument("--treatment", help=treatment_help)
    r.add_argument("--name", help="run directory name")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="compare completed runs over the same graph")
    c.add_argument("run_dirs", nargs="+")
    c.add_argument("--out", help="output directory (default <root>/compare)")
    c.set_defaults(func=cmd_compare)

    d = sub.add_parser("dtopt", help="lag study of the difference-quotient estimator")
    d.add_argument("--config", help="curve JSON: {curve: {family, ...}, t}")
    d.add_argument("--curve", default="logistic", choices=["logistic", "linear", "quadratic"])
    d.add_argument("--t", type=float, help="evaluation time")
    d.add_argument("--n", type=int, default=200)
    d.add_argument("--trials", type=int, default=100_000)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--grid", help="log:DECADES:PER_DECADE (default log:2:25) or a lag list")
    d.add_argument("--closed-form", action=argparse.BooleanOptionalAction, default=True,
                   help="centre the grid on the closed-form optimum (needs curvature)")
    d.add_argument("--out", help="output directory (default <root>/dtopt)")
    d.set_defaults(func=cmd_dtopt)

    s = sub.add_parser("sweep", help="run treatments over several seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--treatment", action="append", help=treatment_help + ", or all")
    s.add_argument("--seeds", default="0")
    s.add_argument("--rounds", type=int)
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.add_argument("--out", help="output directory (default <root>/sweep)")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MismatchError as exc:
        print(f"mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

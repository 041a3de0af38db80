"""Command-line interface: validation, simulation, equilibria, certification, sweeps.

Exit codes follow one convention everywhere: 0 success, 1 domain failure
(validation, convergence, or a failed property), 2 usage or I/O failure.
Every command that produces files also writes a JSON run manifest listing
them, together with the config digest, seeds, and generator identifier
needed to reproduce the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import re
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import InjectionEvent, simulate, trajectory_metrics, write_aggregates_csv, write_trajectory_csv
from .equilibrium import multistart_uniqueness, solve_adoption_diffused
from .model import (
    CROSSOVER_RANGES,
    DEFAULT_RANGES,
    PRNG_ID,
    ModelConfig,
    config_digest,
    early_stage_state,
    load_config,
    random_instance,
    save_config,
)
from .verify import cross_validate, run_property_suite

_ENTER_RE = re.compile(r"^tech([12])@(\d+)$")

SWEEP_PARAMS = {
    "beta": (("tech1", "beta"), ("tech2", "beta")),
    "beta1": (("tech1", "beta"),),
    "beta2": (("tech2", "beta"),),
    "gamma1": (("tech1", "gamma"),),
    "gamma2": (("tech2", "gamma"),),
    "delta1": (("tech1", "delta"),),
    "delta2": (("tech2", "delta"),),
    "x0": (("tech1", "x0"), ("tech2", "x0")),
    "x01": (("tech1", "x0"),),
    "x02": (("tech2", "x0"),),
}


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _fail(code: int, message: str) -> int:
    print(message, file=sys.stderr)
    return code


def _load_config_checked(path: str):
    """Returns (cfg, file_sha256) or an int exit code (2) on load failure."""
    try:
        raw = Path(path).read_bytes()
        cfg = load_config(path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        return _fail(2, f"error: cannot load config {path}: {exc}"), None
    return cfg, hashlib.sha256(raw).hexdigest()


class _Manifest:
    def __init__(self, command: str, args: argparse.Namespace, out_dir: Path):
        self.doc = {
            "command": command,
            "argv": sys.argv[1:] if sys.argv[0].endswith(("coadopt", "__main__.py")) else None,
            "tool_version": __version__,
            "prng": PRNG_ID,
            "started_utc": _utc_now(),
            "options": {},
            "outputs": [],
        }
        self.out_dir = out_dir

    def option(self, **kv):
        self.doc["options"].update({k: v for k, v in kv.items() if v is not None})

    def add_output(self, name: str):
        if name not in self.doc["outputs"]:
            self.doc["outputs"].append(name)

    def write(self):
        self.doc["finished_utc"] = _utc_now()
        path = self.out_dir / "manifest.json"
        self.add_output("manifest.json")
        with open(path, "w") as fh:
            json.dump(self.doc, fh, indent=1)
            fh.write("\n")


def _prepare_out_dir(out: str) -> Path | int:
    out_dir = Path(out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        return _fail(2, f"error: output directory {out} is not writable: {exc}")
    return out_dir


def _parse_enter(specs: list[str]) -> list[tuple[int, int]] | int:
    events = []
    for spec in specs or []:
        m = _ENTER_RE.match(spec)
        if not m:
            return _fail(2, f"error: bad --enter spec {spec!r}, expected techK@T (e.g. tech2@100)")
        events.append((int(m.group(1)), int(m.group(2))))
    return events


# ---------------------------------------------------------------------------
# Subcommands


def cmd_validate(args) -> int:
    cfg, _sha = _load_config_checked(args.config)
    if isinstance(cfg, int):
        return cfg
    report = cfg.validation
    if report.passed:
        print(f"ok: config {args.config} satisfies all model requirements "
              f"(n={cfg.n}, digest {config_digest(cfg)[:12]})")
        return 0
    for item in report.violations:
        print(f"violation: {item}", file=sys.stderr)
    return 1


def cmd_simulate(args) -> int:
    cfg, sha = _load_config_checked(args.config)
    if isinstance(cfg, int):
        return cfg
    if not cfg.validation.passed:
        return _fail(1, "error: config fails validation:\n  " +
                     "\n  ".join(cfg.validation.violations))
    out_dir = _prepare_out_dir(args.out)
    if isinstance(out_dir, int):
        return out_dir

    entered = _parse_enter(args.enter)
    if isinstance(entered, int):
        return entered
    events = [InjectionEvent(time=t, technology=k, fraction=args.seed_fraction)
              for k, t in entered]
    which = tuple(k for k in (1, 2) if k not in {k for k, _ in entered})
    st0 = early_stage_state(cfg, args.seed_fraction, which)

    tr = simulate(cfg, st0, args.horizon, events,
                  deterministic_sum=args.deterministic_sum,
                  record_states=not args.stream)

    manifest = _Manifest("simulate", args, out_dir)
    manifest.doc["config_path"] = args.config
    manifest.doc["config_sha256"] = sha
    manifest.doc["config_digest"] = config_digest(cfg)
    manifest.option(horizon=args.horizon, seed_fraction=args.seed_fraction,
                    enter=args.enter or [], deterministic_sum=args.deterministic_sum,
                    stream=args.stream)

    if not args.stream:
        write_trajectory_csv(tr, out_dir / "trajectory.csv")
        manifest.add_output("trajectory.csv")
    write_aggregates_csv(tr, out_dir / "aggregates.csv")
    manifest.add_output("aggregates.csv")
    if args.plot:
        from .plots import plot_aggregates

        plot_aggregates(trajectory_metrics(tr), out_dir / "trajectory.png",
                        title=f"n={cfg.n}, horizon={args.horizon}",
                        entry_times={k: t for k, t in entered})
        manifest.add_output("trajectory.png")
    manifest.write()
    print(f"wrote {', '.join(manifest.doc['outputs'])} to {out_dir}")
    return 0


def cmd_equilibrium(args) -> int:
    cfg, sha = _load_config_checked(args.config)
    if isinstance(cfg, int):
        return cfg
    if not cfg.validation.passed:
        return _fail(1, "error: config fails validation:\n  " +
                     "\n  ".join(cfg.validation.violations))
    out_dir = _prepare_out_dir(args.out)
    if isinstance(out_dir, int):
        return out_dir

    try:
        eq = solve_adoption_diffused(cfg, tol=args.tol, max_iter=args.max_iter,
                                     deterministic_sum=args.deterministic_sum)
        uniq = multistart_uniqueness(cfg, tol=args.tol, starts=args.starts,
                                     seed=args.seed, max_iter=args.max_iter)
    except ValueError as exc:
        return _fail(1, f"error: {exc}")

    manifest = _Manifest("equilibrium", args, out_dir)
    manifest.doc["config_path"] = args.config
    manifest.doc["config_sha256"] = sha
    manifest.doc["config_digest"] = config_digest(cfg)
    manifest.option(tol=args.tol, max_iter=args.max_iter, starts=args.starts,
                    seed=args.seed)

    with open(out_dir / "equilibrium.json", "w") as fh:
        json.dump(eq.to_dict(), fh, indent=1)
        fh.write("\n")
    manifest.add_output("equilibrium.json")
    uniq_doc = {
        "runs": uniq.runs,
        "converged_runs": uniq.converged_runs,
        "max_pairwise_distance": uniq.max_pairwise_distance,
        "failed_starts": list(uniq.failed_starts),
        "corroborates_uniqueness": uniq.corroborates(args.tol),
    }
    with open(out_dir / "uniqueness.json", "w") as fh:
        json.dump(uniq_doc, fh, indent=1)
        fh.write("\n")
    manifest.add_output("uniqueness.json")
    manifest.write()

    if not eq.converged:
        return _fail(1, f"error: solver did not converge; best residual {eq.residual:.3e}")
    print(f"converged in {eq.iterations} iterations, residual {eq.residual:.3e}, "
          f"ratio error {eq.ratio_check_max_err:.3e}, "
          f"uniqueness spread {uniq.max_pairwise_distance:.3e}")
    if not uniq.corroborates(args.tol):
        return _fail(1, "error: multi-start runs disagree; uniqueness not corroborated")
    return 0


def _parse_seeds(spec: str) -> list[int] | int:
    m = re.match(r"^(\d+)\.\.(\d+)$", spec)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if hi < lo:
            return _fail(2, f"error: empty seed range {spec!r}")
        return list(range(lo, hi + 1))
    try:
        return [int(s) for s in spec.split(",")]
    except ValueError:
        return _fail(2, f"error: bad --seeds spec {spec!r}, expected e.g. 0..9 or 0,3,7")


def cmd_verify(args) -> int:
    if bool(args.config) == bool(args.random):
        return _fail(2, "error: give exactly one of --config or --random N")

    instances: list[tuple[str, ModelConfig]] = []
    if args.config:
        cfg, _sha = _load_config_checked(args.config)
        if isinstance(cfg, int):
            return cfg
        if not cfg.validation.passed:
            return _fail(1, "error: config fails validation:\n  " +
                         "\n  ".join(cfg.validation.violations))
        instances.append((config_digest(cfg)[:12], cfg))
    else:
        seeds = _parse_seeds(args.seeds)
        if isinstance(seeds, int):
            return seeds
        for seed in seeds:
            cfg = random_instance(args.random, seed)
            instances.append((config_digest(cfg)[:12], cfg))

    all_pass = True
    docs = []
    for digest, cfg in instances:
        reports = run_property_suite(cfg, horizon=args.horizon)
        for rep in reports:
            all_pass &= rep.passed
            if args.format == "csv":
                print(rep.line(digest))
        doc = {"instance": digest, "properties": [r.to_dict() for r in reports]}
        if args.cross_validate:
            cv = cross_validate(cfg, horizon=args.horizon)
            doc["cross_validation"] = dict(cv.distances)
            if args.format == "csv":
                print(f"{digest} cross-validation max block distance "
                      f"{cv.max_distance:.3e} (informational)")
        docs.append(doc)

    if args.format == "json":
        print(json.dumps({"instances": docs, "all_pass": all_pass}, indent=1))
    if args.out:
        out_dir = _prepare_out_dir(args.out)
        if isinstance(out_dir, int):
            return out_dir
        manifest = _Manifest("verify", args, out_dir)
        manifest.option(horizon=args.horizon, random=args.random, seeds=args.seeds)
        with open(out_dir / "properties.json", "w") as fh:
            json.dump({"instances": docs, "all_pass": all_pass}, fh, indent=1)
            fh.write("\n")
        manifest.add_output("properties.json")
        manifest.write()
    return 0 if all_pass else 1


def _apply_sweep(cfg: ModelConfig, targets, mode: str, value: float) -> ModelConfig:
    from dataclasses import replace

    updates: dict[str, dict[str, np.ndarray]] = {}
    for tech_name, field_name in targets:
        vec = getattr(getattr(cfg, tech_name), field_name)
        if mode == "scale":
            vec = vec * value
        else:
            vec = vec + value
            if field_name == "x0":
                vec = np.clip(vec, 1e-9, 1.0)  # keep opinions anchored
        updates.setdefault(tech_name, {})[field_name] = vec
    return ModelConfig(
        physical=cfg.physical,
        social=cfg.social,
        tech1=replace(cfg.tech1, **updates.get("tech1", {})),
        tech2=replace(cfg.tech2, **updates.get("tech2", {})),
    )


def cmd_sweep(args) -> int:
    cfg, sha = _load_config_checked(args.config)
    if isinstance(cfg, int):
        return cfg
    if not cfg.validation.passed:
        return _fail(1, "error: config fails validation:\n  " +
                     "\n  ".join(cfg.validation.violations))
    try:
        grid = [float(v) for v in args.grid.split(",") if v.strip() != ""]
    except ValueError:
        return _fail(2, f"error: bad --grid {args.grid!r}, expected comma-separated floats")
    if not grid:
        return _fail(2, "error: empty sweep grid")
    out_dir = _prepare_out_dir(args.out)
    if isinstance(out_dir, int):
        return out_dir

    rows = []
    any_diverged = False
    for value in grid:
        swept = _apply_sweep(cfg, SWEEP_PARAMS[args.param], args.mode, value)
        if not swept.validation.passed:
            rows.append((value, "", "", "", "", "skipped"))
            continue
        try:
            eq = solve_adoption_diffused(swept, tol=args.tol, max_iter=args.max_iter)
        except ValueError:
            rows.append((value, "", "", "", "", "skipped"))
            continue
        if not eq.converged:
            any_diverged = True
        rows.append((
            value,
            repr(float(eq.state.a1.mean())),
            repr(float(eq.state.a2.mean())),
            repr(float((eq.state.a2 / eq.state.a1).mean())),
            repr(float(eq.residual)),
            "ok" if eq.converged else "diverged",
        ))

    manifest = _Manifest("sweep", args, out_dir)
    manifest.doc["config_path"] = args.config
    manifest.doc["config_sha256"] = sha
    manifest.doc["config_digest"] = config_digest(cfg)
    manifest.option(param=args.param, mode=args.mode, grid=grid, tol=args.tol)

    with open(out_dir / "sweep.csv", "w") as fh:
        fh.write("factor,mean_a1,mean_a2,share_ratio,residual,status\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    manifest.add_output("sweep.csv")

    ok_rows = [r for r in rows if r[5] == "ok"]
    if args.plot and ok_rows:
        from .plots import plot_sweep

        plot_sweep(
            [r[0] for r in ok_rows],
            [float(r[1]) for r in ok_rows],
            [float(r[2]) for r in ok_rows],
            [float(r[3]) for r in ok_rows],
            out_dir / "sweep.png",
            param=args.param,
            mode=args.mode,
        )
        manifest.add_output("sweep.png")
    manifest.write()
    skipped = sum(1 for r in rows if r[5] == "skipped")
    print(f"swept {args.param} ({args.mode}) over {len(grid)} points: "
          f"{len(ok_rows)} ok, {skipped} skipped")
    return 1 if any_diverged else 0


def cmd_make_config(args) -> int:
    ranges = CROSSOVER_RANGES if args.scenario == "crossover" else DEFAULT_RANGES
    try:
        cfg = random_instance(args.n, args.seed, ranges=ranges, density=args.density)
    except ValueError as exc:
        return _fail(1, f"error: {exc}")
    meta = {"seed": args.seed, "prng": PRNG_ID, "density": args.density,
            "scenario": args.scenario, "generator_version": __version__}
    try:
        save_config(cfg, args.out, meta=meta)
    except OSError as exc:
        return _fail(2, f"error: cannot write {args.out}: {exc}")
    print(f"wrote config n={args.n} seed={args.seed} digest {config_digest(cfg)[:12]} "
          f"to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coadopt",
        description="Coupled adoption-opinion dynamics for two competing technologies.",
    )
    parser.add_argument("--version", action="version", version=f"coadopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config against all model requirements")
    p.add_argument("--config", required=True, help="config JSON file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="run the dynamics and write trajectory CSVs")
    p.add_argument("--config", required=True)
    p.add_argument("--horizon", type=int, default=1000)
    p.add_argument("--seed-fraction", type=float, default=0.01,
                   help="adopter fraction used for initial seeding and --enter events")
    p.add_argument("--enter", action="append", metavar="techK@T",
                   help="delay a technology's market entry to step T (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--deterministic-sum", action="store_true",
                   help="fixed-order summations, independent of BLAS threading")
    p.add_argument("--stream", action="store_true",
                   help="keep only aggregates (no per-node CSV); for very long runs")
    p.add_argument("--plot", action="store_true", help="also render trajectory.png")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("equilibrium", help="solve the adoption-diffused equilibrium")
    p.add_argument("--config", required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--starts", type=int, default=8,
                   help="random multi-start runs for the uniqueness check")
    p.add_argument("--seed", type=int, default=0, help="seed for multi-start points")
    p.add_argument("--deterministic-sum", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("verify", help="run the six-property certification suite")
    p.add_argument("--config", help="config JSON file")
    p.add_argument("--random", type=int, metavar="N",
                   help="instead of a file, use random instances of size N")
    p.add_argument("--seeds", default="0..9", help="seed list for --random (e.g. 0..9)")
    p.add_argument("--horizon", type=int, default=1000)
    p.add_argument("--cross-validate", action="store_true",
                   help="also report simulation-vs-solver distances (informational)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", help="optional output directory for the JSON report")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="solve equilibria across a parameter grid")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    p.add_argument("--mode", choices=("scale", "shift"), default="scale")
    p.add_argument("--grid", required=True, help="comma-separated factors/shifts")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true", help="also render sweep.png")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("make-config", help="generate a seeded random instance file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density", type=float, default=0.2)
    p.add_argument("--scenario", choices=("default", "crossover"), default="default",
                   help="crossover: aggressive low-quality tech 1 vs quality tech 2")
    p.add_argument("--out", required=True, help="output JSON file")
    p.set_defaults(func=cmd_make_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

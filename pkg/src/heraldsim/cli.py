"""Command-line entry point: ``heraldsim <subcommand> --config run.yaml``.

Subcommands
-----------
point     F and eta at one window
tscan     fidelity against the detection window
kscan     fidelity against the filter bandwidth
optcurve  infidelity against the window at the efficiency target
noisemap  optimal infidelity over a (gamma_dp, gamma_sd) grid
coopscan  optimal infidelity against the cooperativity C = Gamma / gamma
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pydantic
import scipy
import yaml

from .config import ExperimentConfig, load_config
from .diffusion import DiffusionSpec, ensemble_scan
from .errors import CalibrationError, HeraldSimError, IntegrationError
from .filters import TRUNCATION_LIMIT, FilterSpec
from .metrics import bell_state
from .optimize import optimize_over_window

COLUMNS = ["T_gamma", "fidelity", "efficiency", "scheme", "gamma_dp", "gamma_sd", "kappa", "C", "status", "param"]
UNITS = {
    "T_gamma": "1/gamma",
    "gamma_dp": "gamma",
    "gamma_sd": "gamma",
    "kappa": "gamma",
    "C": "dimensionless (Gamma/gamma)",
    "fidelity": "dimensionless",
    "efficiency": "dimensionless",
    "param": "alpha (dimensionless) | Omega (gamma) | beta (gamma^1/2)",
}
SUBCOMMANDS = ("point", "tscan", "kscan", "optcurve", "noisemap", "coopscan")
CHECKPOINT = "checkpoint.jsonl"


@dataclass(frozen=True)
class Task:
    key: str
    sub: str
    kind: str
    gamma_dp: float
    gamma_sd: float
    kappa: Optional[float] = None
    C: Optional[float] = None


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else format(float(x), ".17g")
    return str(x)


def _noise_pairs(cfg: ExperimentConfig):
    if cfg.scan.noise is not None:
        return [tuple(map(float, p)) for p in cfg.scan.noise]
    return [(cfg.atom.gamma_dp, cfg.atom.gamma_sd)]


def build_tasks(sub: str, cfg: ExperimentConfig) -> list[Task]:
    tasks = []
    for kind in cfg.schemes:
        if sub == "noisemap":
            for dp in cfg.scan.gamma_dp:
                for sd in cfg.scan.gamma_sd:
                    tasks.append(Task(f"{sub}:{kind}:{dp!r}:{sd!r}", sub, kind, dp, sd))
            continue
        for dp, sd in _noise_pairs(cfg):
            if sub == "kscan":
                for k in cfg.scan.kappa:
                    tasks.append(Task(f"{sub}:{kind}:{dp!r}:{sd!r}:{k!r}", sub, kind, dp, sd, kappa=k))
            elif sub == "coopscan":
                for c in cfg.scan.C:
                    tasks.append(Task(f"{sub}:{kind}:{dp!r}:{sd!r}:C{c!r}", sub, kind, dp, sd, C=c))
            else:
                tasks.append(Task(f"{sub}:{kind}:{dp!r}:{sd!r}", sub, kind, dp, sd))
    return tasks


def _row(task: Task, cfg, T, fidelity, efficiency, status, param, C=None, kappa=None):
    atom = cfg.atom
    return {
        "T_gamma": T,
        "fidelity": fidelity,
        "efficiency": efficiency,
        "scheme": task.kind,
        "gamma_dp": task.gamma_dp,
        "gamma_sd": task.gamma_sd,
        "kappa": kappa if kappa is not None else cfg.filter.kappa,
        "C": C if C is not None else (atom.Gamma / atom.gamma if atom.gamma > 0 else math.inf),
        "status": status,
        "param": param,
    }


def run_task(task: Task, cfg_data: dict) -> list[dict]:
    """Evaluate one task; returns CSV rows (numbers as Python floats)."""
    cfg = ExperimentConfig.model_validate(cfg_data)
    atom = cfg.atom.params(gamma_dp=task.gamma_dp, gamma_sd=task.gamma_sd)
    if task.C is not None:
        atom = cfg.atom.params(gamma_dp=task.gamma_dp, gamma_sd=task.gamma_sd, Gamma=task.C * cfg.atom.gamma)
    atoms = (atom, atom)
    spec = cfg.scheme.spec(task.kind)
    diffusion = cfg.diffusion.spec() if task.gamma_sd > 0 else None
    integ = cfg.integrator.spec()
    filt = cfg.filter.spec()
    if task.kappa is not None:
        filt = FilterSpec(task.kappa, cfg.filter.n_max)

    if task.sub in ("point", "tscan", "kscan"):
        if task.sub == "tscan":
            windows = np.geomspace(cfg.scan.T_min, cfg.scan.T_max, cfg.scan.T_points)
        else:
            windows = np.array([cfg.scan.T])
        target = bell_state("psi-")
        res = ensemble_scan(atoms, [spec], [windows], diffusion, filt, integ, target)[0]
        flag = res.top_fock >= TRUNCATION_LIMIT
        rows = []
        for T, point in zip(windows, res.metrics(warn=False)):
            if point is None:
                rows.append(_row(task, cfg, float(T), None, float(np.max(res.trace)), "no_herald", spec.param, kappa=task.kappa))
                continue
            status = "truncation_flag" if flag else "ok"
            rows.append(_row(task, cfg, float(T), point.fidelity, point.efficiency, status, spec.param, kappa=task.kappa))
        return rows

    constraint = cfg.constraint.spec()
    try:
        rec = optimize_over_window(task.kind, atoms, constraint, spec, diffusion, filt, integ)
    except CalibrationError:
        return [_row(task, cfg, None, None, None, "calibration_failed", None, C=task.C)]
    if task.sub == "optcurve":
        rows = []
        for r in rec.points:
            status = "optimum" if r.T == rec.T_star else "ok"
            rows.append(_row(task, cfg, r.T, r.point.fidelity, r.point.efficiency, status, r.spec.param))
        for T in rec.failed:
            rows.append(_row(task, cfg, T, None, None, "calibration_failed", None))
        rows.sort(key=lambda row: row["T_gamma"])
        return rows
    return [
        _row(task, cfg, rec.T_star, 1 - rec.infidelity, rec.efficiency, "optimum", rec.params_star.param, C=task.C)
    ]


def _load_checkpoint(path: Path) -> dict:
    done = {}
    if path.exists():
        for line in path.read_text().splitlines():
            if line.strip():
                entry = json.loads(line)
                done[entry["key"]] = entry["rows"]
    return done


def execute(sub: str, cfg: ExperimentConfig, out_dir: Path, jobs: int, resume: bool) -> list[dict]:
    """Run every task (in parallel when ``jobs > 1``) and return rows in task order."""
    tasks = build_tasks(sub, cfg)
    ckpt = out_dir / CHECKPOINT
    done = _load_checkpoint(ckpt) if resume else {}
    if not resume and ckpt.exists():
        ckpt.unlink()
    todo = [t for t in tasks if t.key not in done]
    data = cfg.model_dump(mode="json")

    def store(task, rows):
        done[task.key] = rows
        with ckpt.open("a") as fh:
            fh.write(json.dumps({"key": task.key, "rows": rows}) + "\n")

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [(t, pool.submit(run_task, t, data)) for t in todo]
            for t, fut in futures:
                store(t, fut.result())
    else:
        for t in todo:
            store(t, run_task(t, data))
    rows = []
    for t in tasks:
        rows.extend(done[t.key])
    return rows


def write_csv(rows: list[dict], path: Path):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in COLUMNS])


def write_manifest(path: Path, sub: str, cfg: ExperimentConfig, config_path, wall: float, status: int, rows):
    from importlib import metadata

    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    flagged = sum(1 for r in rows if r["status"] == "truncation_flag")
    manifest = {
        "subcommand": sub,
        "config_path": None if config_path is None else str(config_path),
        "config_sha256": cfg.digest(),
        "versions": {
            "package": version,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pydantic": pydantic.__version__,
            "pyyaml": yaml.__version__,
        },
        "wall_time_s": wall,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "exit_status": status,
        "rows": len(rows),
        "truncation_flags": flagged,
        "units": UNITS,
    }
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heraldsim", description="Heralded remote-entanglement simulator.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="YAML configuration file (defaults when omitted)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--jobs", type=int, help="worker processes (overrides jobs)")
    p.add_argument("--resume", action="store_true", help="reuse finished tasks from the checkpoint")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except pydantic.ValidationError as exc:
        for err in exc.errors():
            loc = ".".join(str(x) for x in err["loc"])
            print(f"config error: {loc}: {err['msg']}", file=sys.stderr)
        return 1
    except (OSError, yaml.YAMLError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.jobs is not None and args.jobs < 1:
        print("config error: jobs: must be >= 1", file=sys.stderr)
        return 1
    jobs = args.jobs or cfg.jobs
    out_dir = Path(args.out or cfg.output.dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    status = 0
    rows = []
    try:
        rows = execute(args.subcommand, cfg, out_dir, jobs, args.resume)
    except (IntegrationError, HeraldSimError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        status = 2
    if status == 0:
        csv_path = out_dir / f"{args.subcommand}.csv"
        write_csv(rows, csv_path)
        if cfg.output.plot:
            from .plotting import plot_rows

            plot_rows(args.subcommand, rows, out_dir / f"{args.subcommand}.svg")
    write_manifest(out_dir / "run_manifest.json", args.subcommand, cfg, args.config,
                   time.perf_counter() - start, status, rows)
    return status


if __name__ == "__main__":
    sys.exit(main())

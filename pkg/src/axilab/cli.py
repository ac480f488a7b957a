"""Command line entry point: ``axilab run | verify | report``.

Exit codes: 0 success, 2 configuration error, 3 missing artifacts,
4 solver failure, 5 verifier failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config, parse_config
from .gamma import CFLViolation, SolverDiverged
from .io import SnapshotFormatError, dumps, read_trajectory, rows_csv, write_trajectory
from .norms import CoverageError
from .ns import PoissonNotConverged
from .pipeline import RunResult, run_config, verify_run, verify_suite
from .report import oscillation_svg, tables_csv
from .verify import VerifierReport

log = logging.getLogger("axilab")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4, 5
SOLVER_ERRORS = (CFLViolation, SolverDiverged, PoissonNotConverged, FloatingPointError)


class MissingArtifact(Exception):
    pass


def _now(reproducible: bool):
    return None if reproducible else datetime.now(timezone.utc).isoformat(timespec="seconds")


# ----------------------------------------------------------------- run


def _write_run(out: Path, res: RunResult) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "config.toml"]
    files[0].write_text(res.config.text)
    if res.members:
        for m in res.members:
            files += _write_run(out / "members" / m.config.name, m)
    else:
        files += write_trajectory(out / "snapshots", res.trajectory)
        p = out / "steps.csv"
        p.write_text(rows_csv(res.steps_header, res.steps))
        files.append(p)
    p = out / "diagnostics.json"
    p.write_text(dumps(res.diagnostics))
    files.append(p)
    return files


def cmd_run(config: str, out: str | None, reproducible: bool) -> int:
    cfg = load_config(config)
    started = _now(reproducible)
    res = run_config(cfg)
    out_dir = Path(out) if out else Path("runs") / cfg.name
    files = _write_run(out_dir, res)
    manifest = {
        "config_hash": cfg.digest(),
        "version": __version__,
        "started": started,
        "finished": _now(reproducible),
        "files": sorted(str(f.relative_to(out_dir)) for f in files),
    }
    (out_dir / "manifest.json").write_text(dumps(manifest))
    print(f"wrote {len(files) + 1} files to {out_dir}")
    return EXIT_OK


# -------------------------------------------------------------- verify


def _load_run(directory: Path) -> RunConfig:
    cfg_path = directory / "config.toml"
    if not cfg_path.exists():
        raise MissingArtifact(f"{cfg_path} not found")
    return parse_config(cfg_path.read_text(), str(cfg_path))


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise MissingArtifact(f"{path} not found")
    return json.loads(path.read_text())


def _read_steps(path: Path) -> tuple[list, list]:
    if not path.exists():
        raise MissingArtifact(f"{path} not found")
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    return header, [[float(x) for x in ln.split(",")] for ln in lines[1:]]


def _verify_single(directory: Path, cfg: RunConfig) -> VerifierReport:
    try:
        traj = read_trajectory(directory / "snapshots")
    except (FileNotFoundError, SnapshotFormatError) as exc:
        raise MissingArtifact(str(exc)) from None
    header, steps = _read_steps(directory / "steps.csv")
    rep = verify_run(cfg, traj, header, steps)
    for e in rep.entries:
        e.config["run"] = cfg.name
    return rep


def verify_directory(directory: Path) -> VerifierReport:
    cfg = _load_run(directory)
    if cfg.solver != "suite":
        return _verify_single(directory, cfg)
    diag = _read_json(directory / "diagnostics.json")
    reports = []
    for name in cfg.suite["members"]:
        sub = directory / "members" / name
        reports.append(_verify_single(sub, _load_run(sub)))
    rep = verify_suite(cfg, reports, diag)
    for e in rep.entries:
        e.config.setdefault("run", cfg.name)
    return rep


def _summary(rep: VerifierReport) -> str:
    lines = [f"{'run':<20} {'check':<20} {'lhs':>12} {'rhs':>12} {'result':>8}"]
    for e in rep.entries:
        verdict = "vacuous" if e.passed is None else ("pass" if e.passed else "FAIL")
        lines.append(f"{e.config.get('run', ''):<20} {e.name:<20} {e.lhs:>12.5g} {e.rhs:>12.5g} {verdict:>8}")
    return "\n".join(lines)


def cmd_verify(directory: str) -> int:
    d = Path(directory)
    rep = verify_directory(d)
    (d / "verifier.json").write_text(dumps(rep.as_dict()))
    print(_summary(rep))
    return EXIT_OK if rep.all_pass else EXIT_VERIFY


# -------------------------------------------------------------- report


def _profiles(directory: Path, diag: dict) -> dict:
    members = directory / "members"
    if "members" in diag and members.is_dir():
        return {name: _read_json(members / name / "diagnostics.json") for name in diag["members"]}
    name = diag.get("provenance", {}).get("name", directory.name)
    return {name: diag} if diag else {}


def cmd_report(directory: str, fmt: str, reproducible: bool) -> int:
    d = Path(directory)
    diag = _read_json(d / "diagnostics.json")
    vpath = d / "verifier.json"
    verifier = json.loads(vpath.read_text()) if vpath.exists() else None
    profiles = _profiles(d, diag)
    if fmt == "csv":
        outputs = tables_csv(profiles, verifier)
    elif fmt == "json":
        outputs = {"report.json": dumps({"diagnostics": diag, "runs": profiles, "verifier": verifier})}
    else:
        outputs = {"oscillation.svg": oscillation_svg(profiles, reproducible)}
    for name, text in outputs.items():
        (d / name).write_text(text)
        print(d / name)
    return EXIT_OK


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="axilab", description="Axisymmetric swirl solver and estimate verifier.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a configuration or preset")
    r.add_argument("config", help="config file path or preset name")
    r.add_argument("--out", help="output directory (default runs/<name>)")
    r.add_argument("--reproducible", action="store_true", help="omit timestamps")
    v = sub.add_parser("verify", help="run the configured checks on a run directory")
    v.add_argument("directory")
    rp = sub.add_parser("report", help="emit tables or plots from a run directory")
    rp.add_argument("directory")
    rp.add_argument("--format", choices=("csv", "json", "svg"), default="json")
    rp.add_argument("--reproducible", action="store_true", help="omit the SVG date")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, args.reproducible)
        if args.command == "verify":
            return cmd_verify(args.directory)
        return cmd_report(args.directory, args.format, args.reproducible)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except CoverageError as exc:
        print(f"solver failure: trajectory too short: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

"""Run configuration files.

Configurations are TOML documents: ``[section]`` headers with scalar or
array values.  Sections and keys::

    [run]        solver = "gamma" | "ns" | "suite", t_end, snapshot_every, cfl, seed, name
    [grid]       nr, nz, r_max, z_len
    [initial]    kind plus its parameters (see INITIAL_KINDS)
    [drift.b1]   kind = "shell", amplitude, r_in, r_out
    [drift.b2]   kind = "stream", profile, amplitude, ...
    [drift.b3]   kind = "scaled_inverse_r", c
    [diagnostics] r0, levels, hse_r0, bmo_rho_max
    [verifier]   delta, c0, M0, mean_value_p, moser_J, lp_p, slack
    [liouville]  gamma_min, threshold
    [suite]      members, nash_samples, nash_M

Only ``[run]`` and ``[grid]`` are required.  A preset name may stand in for
a path.
"""
from __future__ import annotations

import hashlib
import json
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .drift import DriftSpec
from .verify import MIN_WINDOW_SNAPSHOTS

SOLVERS = ("gamma", "ns", "suite")
INITIAL_KINDS = {
    "gamma": ("zero", "r2", "r2_wave", "gauss"),
    "ns": ("zero", "rigid_rotation", "swirl_decay", "swirl_free"),
    "suite": (),
}
PRESETS = ("gamma_r2_steady", "gamma_b3_drift", "gamma_bmo_drift", "ns_rigid_rotation", "ns_swirl_decay",
           "verify_suite_full")

DIAGNOSTIC_DEFAULTS = {"r0": None, "levels": 3, "hse_r0": None, "bmo_rho_max": None}
VERIFIER_DEFAULTS = {"delta": 0.4, "c0": 0.1, "M0": 1.0, "mean_value_p": 3, "moser_J": 6, "lp_p": 0.5,
                     "slack": 0.0}
LIOUVILLE_DEFAULTS = {"gamma_min": 0.9, "threshold": 10.0}
SUITE_DEFAULTS = {"members": [], "nash_samples": 1000, "nash_M": 2.0}
RUN_KEYS = ("solver", "t_end", "snapshot_every", "cfl", "seed", "name")
GRID_KEYS = ("nr", "nz", "r_max", "z_len")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = f"{source or '<config>'}" + (f":{line}" if line else "")
        super().__init__(f"{where}: {message}")


def _locate(text: str, section: str | None, key: str | None) -> int | None:
    """Line number of ``key`` inside ``[section]`` (or of the header if ``key`` is None)."""
    current = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]", line)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return n
            continue
        if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*=", line):
            return n
    return None


@dataclass
class RunConfig:
    solver: str
    grid: dict
    t_end: float = 0.0
    snapshot_every: float = 0.0
    cfl: float = 0.8
    seed: int = 0
    name: str = "run"
    initial: dict = field(default_factory=dict)
    drift: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    verifier: dict = field(default_factory=dict)
    liouville: dict = field(default_factory=dict)
    suite: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    text: str = ""
    source: str | None = None

    def canonical(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        """Hash of the parsed content; stable under re-serialisation and reformatting."""
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    @property
    def scale_r0(self) -> float:
        """Largest diagnostic radius (default a quarter of ``r_max``)."""
        r0 = self.diagnostics.get("r0")
        return float(r0) if r0 is not None else self.grid["r_max"] / 4

    def drift_specs(self) -> dict[str, DriftSpec]:
        return {slot: DriftSpec(spec["kind"], {k: v for k, v in spec.items() if k != "kind"})
                for slot, spec in self.drift.items()}


def _section(doc: dict, name: str, defaults: dict, text: str, source) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table", _locate(text, name, None), source)
    _check_keys(sec, defaults, name, text, source)
    out = dict(defaults)
    out.update(sec)
    return out


def _check_keys(sec: dict, allowed, name: str, text: str, source) -> None:
    unknown = set(sec) - set(allowed)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {key!r} in [{name}]", _locate(text, name, key), source)


def _number(sec: dict, key: str, name: str, text: str, source, positive=True, integer=False):
    if key not in sec:
        raise ConfigError(f"missing key {key!r} in [{name}]", _locate(text, name, None), source)
    v = sec[key]
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok:
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"{name}.{key} must be {kind}, got {v!r}", _locate(text, name, key), source)
    if positive and not v > 0:
        raise ConfigError(f"{name}.{key} must be positive, got {v!r}", _locate(text, name, key), source)
    return v


def parse_config(text: str, source: str | None = None) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"parse error: {exc}", int(m.group(1)) if m else None, source) from None
    unknown = set(doc) - {"run", "grid", "initial", "drift", "diagnostics", "verifier", "liouville", "suite"}
    if unknown:
        sec = sorted(unknown)[0]
        raise ConfigError(f"unknown section [{sec}]", _locate(text, sec, None), source)
    if "run" not in doc:
        raise ConfigError("missing [run] section", None, source)
    run = doc["run"]
    _check_keys(run, RUN_KEYS, "run", text, source)
    solver = run.get("solver")
    if solver not in SOLVERS:
        raise ConfigError(f"run.solver must be one of {SOLVERS}, got {solver!r}", _locate(text, "run", "solver"),
                          source)
    cfg = RunConfig(solver=solver, grid={}, raw=doc, text=text, source=source)
    cfg.seed = int(run.get("seed", 0))
    cfg.name = str(run.get("name", "run"))
    cfg.suite = _section(doc, "suite", SUITE_DEFAULTS, text, source)
    if solver == "suite":
        members = cfg.suite["members"]
        if not members:
            raise ConfigError("suite needs at least one member", _locate(text, "suite", "members"), source)
        for m in members:
            if m not in PRESETS or m == "verify_suite_full":
                raise ConfigError(f"unknown suite member {m!r}", _locate(text, "suite", "members"), source)
        return cfg
    for key in ("t_end", "snapshot_every"):
        setattr(cfg, key, float(_number(run, key, "run", text, source)))
    cfg.cfl = float(run.get("cfl", 0.8))
    if not 0 < cfg.cfl <= 1:
        raise ConfigError("run.cfl must lie in (0, 1]", _locate(text, "run", "cfl"), source)
    n = cfg.t_end / cfg.snapshot_every
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ConfigError("run.t_end must be a whole number of snapshot intervals",
                          _locate(text, "run", "snapshot_every"), source)
    if "grid" not in doc:
        raise ConfigError("missing [grid] section", None, source)
    g = doc["grid"]
    _check_keys(g, GRID_KEYS, "grid", text, source)
    for key in ("nr", "nz"):
        v = _number(g, key, "grid", text, source, integer=True)
        if v < 8:
            raise ConfigError(f"grid.{key} must be >= 8", _locate(text, "grid", key), source)
    for key in ("r_max", "z_len"):
        _number(g, key, "grid", text, source)
    cfg.grid = {k: g[k] for k in GRID_KEYS}
    ini = dict(doc.get("initial", {"kind": "zero"}))
    kind = ini.get("kind", "zero")
    if kind not in INITIAL_KINDS[solver]:
        raise ConfigError(f"initial.kind {kind!r} not available for solver {solver!r}",
                          _locate(text, "initial", "kind"), source)
    cfg.initial = ini
    drift = doc.get("drift", {})
    for slot, spec in drift.items():
        where = _locate(text, f"drift.{slot}", None)
        if slot not in ("b1", "b2", "b3") or not isinstance(spec, dict) or "kind" not in spec:
            raise ConfigError(f"drift section {slot!r} needs a kind", where, source)
        try:
            DriftSpec(spec["kind"], {})
        except ValueError as exc:
            raise ConfigError(str(exc), _locate(text, f"drift.{slot}", "kind"), source) from None
    if drift and solver == "ns":
        raise ConfigError("the NS solver computes its own drift; remove [drift]", _locate(text, "drift.b1", None),
                          source)
    cfg.drift = drift
    cfg.diagnostics = _section(doc, "diagnostics", DIAGNOSTIC_DEFAULTS, text, source)
    cfg.verifier = _section(doc, "verifier", VERIFIER_DEFAULTS, text, source)
    cfg.liouville = _section(doc, "liouville", LIOUVILLE_DEFAULTS, text, source)
    if not 0 < cfg.verifier["delta"] < 1:
        raise ConfigError("verifier.delta must lie in (0, 1)", _locate(text, "verifier", "delta"), source)
    r0 = cfg.scale_r0
    if r0 > cfg.grid["r_max"] / 4 * (1 + 1e-12):
        raise ConfigError("diagnostics.r0 must not exceed r_max / 4", _locate(text, "diagnostics", "r0"), source)
    if cfg.t_end < r0 * r0 * (1 - 1e-12):
        raise ConfigError(f"run.t_end must cover the largest cylinder (t_end >= r0^2 = {r0 * r0:g})",
                          _locate(text, "run", "t_end"), source)
    # the finest verifier cylinder, of half radius, needs MIN_WINDOW_SNAPSHOTS snapshots
    if cfg.snapshot_every > (r0 / 2) ** 2 / MIN_WINDOW_SNAPSHOTS * (1 + 1e-12):
        raise ConfigError(f"run.snapshot_every too coarse for the verifier; need <= "
                          f"{(r0 / 2) ** 2 / MIN_WINDOW_SNAPSHOTS:g}", _locate(text, "run", "snapshot_every"),
                          source)
    return cfg


def preset_path(name: str) -> Path:
    ref = resources.files("axilab.presets") / f"{name}.toml"
    return Path(str(ref))


def load_config(path_or_preset: str) -> RunConfig:
    p = Path(path_or_preset)
    if not p.exists() and path_or_preset in PRESETS:
        p = preset_path(path_or_preset)
    if not p.exists():
        raise ConfigError(f"no such config file or preset: {path_or_preset}")
    return parse_config(p.read_text(), str(p))

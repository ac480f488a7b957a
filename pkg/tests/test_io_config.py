import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from axilab.config import PRESETS, ConfigError, load_config, parse_config
from axilab.grid import ODD, ScalarField, Trajectory, VectorFieldCyl, make_grid
from axilab.io import (SnapshotFormatError, decode_snapshot, dumps, encode_snapshot, read_trajectory, rows_csv,
                       write_trajectory)

BASE = """\
[run]
solver = "gamma"
t_end = 0.1
snapshot_every = 0.00125

[grid]
nr = 16
nz = 16
r_max = 1.0
z_len = 1.0
"""


@settings(max_examples=30, deadline=None)
@given(nr=st.integers(8, 20), nz=st.integers(8, 20), t=st.floats(-1e3, 1e3), seed=st.integers(0, 2 ** 31))
def test_scalar_snapshot_round_trip(nr, nz, t, seed):
    g = make_grid(nr, nz, 1.5, 2.0)
    f = ScalarField(g, np.random.default_rng(seed).normal(size=g.shape), ODD)
    back, t2 = decode_snapshot(encode_snapshot(f, t))
    assert t2 == t and back.parity == ODD and back.grid == g
    assert np.array_equal(back.values, f.values)


def test_vector_trajectory_round_trip(tmp_path):
    g = make_grid(8, 12, 1.0, 1.0)
    rng = np.random.default_rng(0)
    snaps = tuple(VectorFieldCyl.from_arrays(g, *rng.normal(size=(3, *g.shape))) for _ in range(3))
    traj = Trajectory(np.array([0.0, 0.5, 1.0]), snaps)
    files = write_trajectory(tmp_path, traj)
    assert [f.name for f in files] == ["snap_0000.axns", "snap_0001.axns", "snap_0002.axns"]
    back = read_trajectory(tmp_path)
    assert np.array_equal(back.times, traj.times)
    for a, b in zip(back.snapshots, snaps):
        for name in ("vr", "vtheta", "vz"):
            assert np.array_equal(getattr(a, name).values, getattr(b, name).values)
            assert getattr(a, name).parity == getattr(b, name).parity


def test_snapshot_format_errors(tmp_path):
    g = make_grid(8, 8, 1.0, 1.0)
    buf = encode_snapshot(ScalarField.zeros(g), 0.0)
    with pytest.raises(SnapshotFormatError, match="magic"):
        decode_snapshot(b"XXXX" + buf[4:])
    with pytest.raises(SnapshotFormatError, match="bytes"):
        decode_snapshot(buf[:-8])
    with pytest.raises(SnapshotFormatError, match="header"):
        decode_snapshot(buf[:10])
    with pytest.raises(FileNotFoundError):
        read_trajectory(tmp_path)


def test_dumps_is_deterministic_and_safe():
    obj = {"b": np.float64(1.5), "a": [math.inf, -math.inf, np.int64(3)], "c": np.array([1.0, 2.0])}
    text = dumps(obj)
    assert text == dumps(dict(reversed(list(obj.items()))))
    assert json.loads(text) == {"a": ["inf", "-inf", 3], "b": 1.5, "c": [1.0, 2.0]}
    assert rows_csv(["x", "y"], [(0.1, 2)]) == "x,y\n0.1,2\n"


def test_minimal_config_defaults():
    cfg = parse_config(BASE)
    assert cfg.solver == "gamma" and cfg.grid["nr"] == 16 and cfg.initial == {"kind": "zero"}
    assert cfg.scale_r0 == 0.25 and cfg.verifier["delta"] == 0.4 and cfg.cfl == 0.8


def test_digest_ignores_formatting():
    reformatted = "# comment\n" + BASE.replace("nr = 16", "nr=16   # radial cells").replace("t_end = 0.1", "t_end = 1e-1")
    assert parse_config(BASE).digest() == parse_config(reformatted).digest()
    assert parse_config(BASE).digest() != parse_config(BASE.replace("nr = 16", "nr = 32")).digest()


@pytest.mark.parametrize("edit, line, match", [
    (("nr = 16", "nr = 4"), 7, "nr"),
    (("nr = 16", "nr = 16.5"), 7, "integer"),
    (('solver = "gamma"', 'solver = "euler"'), 2, "solver"),
    (("t_end = 0.1", "t_end = -1"), 3, "positive"),
    (("snapshot_every = 0.00125", "snapshot_every = 0.03"), 4, "whole number"),
    (("snapshot_every = 0.00125", "snapshot_every = 0.005"), 4, "too coarse"),
    (("t_end = 0.1", "t_end = 0.05"), 3, "cover"),
    (("z_len = 1.0", "z_len = 1.0\nbogus = 1"), 11, "bogus"),
    (("t_end = 0.1", "t_end = 0.1\ntend = 1"), 4, "tend"),
])
def test_config_errors_carry_line_numbers(edit, line, match):
    with pytest.raises(ConfigError, match=match) as info:
        parse_config(BASE.replace(*edit), "cfg.toml")
    if line is not None:
        assert info.value.line == line and str(info.value).startswith(f"cfg.toml:{line}:")


def test_config_section_errors():
    with pytest.raises(ConfigError, match="unknown section") as info:
        parse_config(BASE + "\n[extra]\nx = 1\n")
    assert info.value.line == 12
    with pytest.raises(ConfigError, match="unknown key 'foo'") as info:
        parse_config(BASE + "\n[verifier]\nfoo = 1\n")
    assert info.value.line == 13
    with pytest.raises(ConfigError, match="delta"):
        parse_config(BASE + "\n[verifier]\ndelta = 1.5\n")
    with pytest.raises(ConfigError, match="r0"):
        parse_config(BASE + "\n[diagnostics]\nr0 = 0.5\n")
    with pytest.raises(ConfigError, match="not available"):
        parse_config(BASE + '\n[initial]\nkind = "rigid_rotation"\n')
    with pytest.raises(ConfigError, match="parse error") as info:
        parse_config(BASE + "\n[grid\n")
    assert info.value.line == 12
    with pytest.raises(ConfigError, match="kind"):
        parse_config(BASE + '\n[drift.b4]\nkind = "shell"\n')
    ns = BASE.replace('"gamma"', '"ns"') + '\n[drift.b3]\nkind = "scaled_inverse_r"\nc = 1.0\n'
    with pytest.raises(ConfigError, match="NS solver"):
        parse_config(ns)


def test_suite_config_validation():
    with pytest.raises(ConfigError, match="member"):
        parse_config('[run]\nsolver = "suite"\n[suite]\nmembers = ["nope"]\n')
    with pytest.raises(ConfigError, match="at least one"):
        parse_config('[run]\nsolver = "suite"\n')


@pytest.mark.parametrize("name", PRESETS)
def test_presets_parse(name):
    cfg = load_config(name)
    assert cfg.name == name
    with pytest.raises(ConfigError, match="no such"):
        load_config(name + "_missing")

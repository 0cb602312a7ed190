"""Trajectory-library collection and persistence.

File format (``docs/format.md``): one JSON header line followed by
newline-delimited JSON records. Floats are serialized with Python's
shortest-round-trip ``repr``, so a save/load cycle is lossless to the last
bit; the header carries a SHA-256 checksum over the record lines.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .bsd import TrajectoryLibrary, TrajectoryRecord
from .dynamics import SystemSpec
from .errors import ConfigError, LibraryFormatError
from .mbd import MbdConfig, mbd_plan
from .numcore import RngStream
from .parking import build_scene, sample_initial_state

FORMAT_VERSION = 1


def collect_library(system: SystemSpec, n_target: int, base_seed: int,
                    mbd_cfg: MbdConfig, min_reward: float = 0.0,
                    n_goal_spaces: int = 16,
                    progress=None) -> TrajectoryLibrary:
    """Collect records by running the model-based planner from randomized
    initial conditions and uniformly sampled goal spaces, keeping plans with
    reward >= ``min_reward``.

    Deterministic in ``base_seed``: each attempt draws from its own stream,
    so results do not depend on batching or parallel execution.
    """
    if n_target < 1:
        raise ConfigError("n_target must be >= 1")
    root = RngStream(base_seed).child("collect", system.system_id)
    records = []
    attempts = 0
    while len(records) < n_target:
        stream = root.child("attempt", attempts)
        attempts += 1
        if attempts > 10 * n_target and len(records) < attempts / 100:
            raise ConfigError("oracle too weak: acceptance rate below 1%")
        goal = int(stream.child("goal").generator().integers(n_goal_spaces))
        scene = build_scene(goal, None, system)
        x0 = sample_initial_state(scene, system, stream.child("init"))
        result = mbd_plan(x0, scene, system, mbd_cfg, stream.child("plan"))
        if result.reward >= min_reward:
            records.append(TrajectoryRecord(controls=result.controls,
                                            states=result.states,
                                            reward=result.reward))
            if progress is not None:
                progress(len(records), n_target)
    return TrajectoryLibrary(records, system, provenance={
        "generator": "mbd",
        "base_seed": base_seed,
        "attempts": attempts,
        "min_reward": min_reward,
        "mbd": {"n_diffuse": mbd_cfg.n_diffuse, "k_candidates": mbd_cfg.k_candidates,
                "temperature": mbd_cfg.temperature},
    })


def _record_line(rec: TrajectoryRecord) -> str:
    return json.dumps({
        "controls": rec.controls.ravel().tolist(),
        "states": rec.states.ravel().tolist(),
        "reward": rec.reward,
    })


def save_library(library: TrajectoryLibrary, path) -> None:
    """Write the NDJSON library file (header line + one line per record)."""
    path = Path(path)
    lines = [_record_line(r) for r in library.records]
    digest = hashlib.sha256()
    for line in lines:
        digest.update(line.encode())
        digest.update(b"\n")
    H, n_u = library.records[0].controls.shape
    mean, lo, hi = library.reward_stats
    header = json.dumps({
        "format_version": FORMAT_VERSION,
        "system": library.system.to_dict(),
        "n_records": len(library),
        "horizon": H,
        "n_u": n_u,
        "n_x": library.system.n_x,
        "reward_stats": {"mean": mean, "min": lo, "max": hi},
        "provenance": library.provenance,
        "checksum": digest.hexdigest(),
    })
    with open(path, "w") as f:
        f.write(header + "\n")
        for line in lines:
            f.write(line + "\n")


def load_library(path, expected_system: SystemSpec | None = None) -> TrajectoryLibrary:
    """Read an NDJSON library; verifies checksum, dimensions and system id."""
    path = Path(path)
    with open(path) as f:
        header_line = f.readline()
        body = f.read()
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as e:
        raise LibraryFormatError(f"unreadable header: {e}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise LibraryFormatError(
            f"unsupported format version {header.get('format_version')!r}")

    lines = body.splitlines()
    if len(lines) != header["n_records"]:
        raise LibraryFormatError(
            f"expected {header['n_records']} records, file has {len(lines)}")
    digest = hashlib.sha256()
    for line in lines:
        digest.update(line.encode())
        digest.update(b"\n")
    if digest.hexdigest() != header["checksum"]:
        raise LibraryFormatError("checksum mismatch: file is corrupted")

    system = SystemSpec.from_dict(header["system"])
    if expected_system is not None and system.system_id != expected_system.system_id:
        raise LibraryFormatError(
            f"library is for system {system.system_id!r}, "
            f"expected {expected_system.system_id!r}")
    H, n_u, n_x = header["horizon"], header["n_u"], header["n_x"]
    records = []
    for line in lines:
        d = json.loads(line)
        controls = np.asarray(d["controls"], dtype=float)
        states = np.asarray(d["states"], dtype=float)
        if controls.size != H * n_u or states.size != (H + 1) * n_x:
            raise LibraryFormatError("record dimensions disagree with header")
        records.append(TrajectoryRecord(controls=controls.reshape(H, n_u),
                                        states=states.reshape(H + 1, n_x),
                                        reward=float(d["reward"])))
    lib = TrajectoryLibrary(records, system, provenance=header["provenance"])
    mean, lo, hi = lib.reward_stats
    hs = header["reward_stats"]
    if not (np.isclose(mean, hs["mean"]) and np.isclose(lo, hs["min"])
            and np.isclose(hi, hs["max"])):
        raise LibraryFormatError("reward statistics disagree with records")
    return lib

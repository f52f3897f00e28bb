"""Offline transition datasets: a columnar little-endian binary file plus a JSON sidecar.

Layout of ``<stem>.bin``: the columns of ``COLUMNS`` stored back to back, each
as a contiguous C-order block of ``count`` rows.  ``<stem>.json`` records the
env id, row count, schema version and per-column dtype/width/byte offset.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .envs import TransitionRecord

SCHEMA_VERSION = 1
COLUMNS = ("state", "action", "reward", "next_state", "terminal", "truncated")
_DTYPES = {"terminal": "|u1", "truncated": "|u1"}


def _paths(path):
    p = Path(path)
    stem = p.with_suffix("") if p.suffix in (".bin", ".json") else p
    return stem.with_suffix(".bin"), stem.with_suffix(".json")


def write_dataset(path, records, env_id, extra=None):
    bin_path, meta_path = _paths(path)
    count = len(records.reward)
    columns, offset = [], 0
    with open(bin_path, "wb") as fh:
        for name in COLUMNS:
            arr = np.asarray(getattr(records, name))
            dtype = _DTYPES.get(name, "<f8")
            block = arr.astype(dtype).reshape(count, -1)
            data = np.ascontiguousarray(block).tobytes()
            fh.write(data)
            columns.append({"name": name, "dtype": dtype, "width": block.shape[1], "offset": offset})
            offset += len(data)
    meta = {"schema_version": SCHEMA_VERSION, "env_id": env_id, "count": count, "columns": columns}
    if extra:
        meta.update(extra)
    meta_path.write_text(json.dumps(meta, indent=2))
    return bin_path, meta_path


def read_dataset(path):
    bin_path, meta_path = _paths(path)
    meta = json.loads(meta_path.read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported dataset schema {meta.get('schema_version')}")
    raw = bin_path.read_bytes()
    count = meta["count"]
    cols = {}
    for col in meta["columns"]:
        arr = np.frombuffer(raw, dtype=col["dtype"], count=count * col["width"], offset=col["offset"])
        arr = arr.reshape(count, col["width"])
        if col["name"] in ("reward", "terminal", "truncated"):
            arr = arr[:, 0]
        if col["dtype"] == "|u1":
            arr = arr.astype(bool)
        else:
            arr = arr.astype(np.float64)
        cols[col["name"]] = arr
    return TransitionRecord(**cols), meta


def stack_records(records):
    return TransitionRecord(
        *[np.concatenate([np.atleast_1d(getattr(r, c)) if c in ("reward", "terminal", "truncated")
                          else np.atleast_2d(getattr(r, c)) for r in records]) for c in COLUMNS]
    )


def uniform_behavior(env):
    def act(state, rng):
        n = np.shape(state)[:-1]
        return rng.uniform(env.spec.action_low, env.spec.action_high, n + (env.act_dim,))

    return act


def generate_dataset(env, behavior, count, rng, num_envs=16):
    """Roll out ``behavior(state, rng) -> action`` until ``count`` transitions are collected."""
    chunks, total = [], 0
    state = env.reset(rng, num_envs)
    t = np.zeros(num_envs, dtype=int)
    while total < count:
        action = np.clip(behavior(state, rng), env.spec.action_low, env.spec.action_high)
        rec = env.step(state, action, rng, t)
        chunks.append(rec)
        total += num_envs
        done = rec.terminal | rec.truncated
        t = np.where(done, 0, t + 1)
        state = rec.next_state.copy()
        if np.any(done):
            state[done] = env.reset(rng, int(done.sum()))
    out = stack_records(chunks)
    return TransitionRecord(*[getattr(out, c)[:count] for c in COLUMNS])

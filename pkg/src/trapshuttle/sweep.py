"""Deterministic parameter-grid execution with resumable checkpoints.

The engine evaluates a registered cell task over the cartesian product
of named axes.  Results are bit-identical regardless of parallelism
degree or how many times a run was interrupted and resumed, because

* each cell's substream seed is a pure function of the global seed and
  the cell's lexicographic index (splitmix64 finalizer),
* cells are side-effect-free, and
* the output table is assembled in lexicographic cell order no matter
  the completion order.

Checkpoint file format (version 1, little endian throughout):

    bytes 0..7    magic  b"TSCHKPT1"
    bytes 8..11   u32    L, byte length of the header JSON
    bytes 12..    L bytes of UTF-8 JSON with sorted keys:
                  {"axes_sha256", "n_outputs", "params_sha256", "seed",
                   "seed_policy", "shape", "task", "version"}
    next 4 bytes  u32    crc32 of the header JSON bytes
    then 0+ records, each
                  u64    cell index (lexicographic, row-major)
                  f64*K  the K task outputs
                  u32    crc32 of the preceding 8 + 8*K bytes

A truncated final record (crash mid-append) is discarded on resume; a
complete record with a bad checksum means the file was damaged and
raises CorruptCheckpointError instead of silently recomputing.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from trapshuttle import __version__

_MAGIC = b"TSCHKPT1"
_SEED_POLICIES = ("cell", "major")


class CorruptCheckpointError(RuntimeError):
    pass


class CheckpointMismatchError(RuntimeError):
    pass


def cell_seed(seed: int, index: int) -> int:
    """Stable per-cell substream seed (splitmix64 finalizer)."""
    z = (seed * 0x9E3779B97F4A7C15 + index + 1) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return int(z ^ (z >> 31))


@dataclass(frozen=True)
class CellTask:
    """A registered cell function plus its output column names."""
    name: str
    fn: Callable[[int, tuple, dict], tuple]
    outputs: Callable[[dict], tuple]


TASKS: dict[str, CellTask] = {}


def register_task(name: str, outputs):
    """Register fn(seed, coords, params) -> tuple of floats.

    outputs is either a tuple of column names or a callable mapping the
    params dict to one (for tasks whose arity depends on parameters).
    """
    out_fn = outputs if callable(outputs) else (lambda params: tuple(outputs))

    def deco(fn):
        if name in TASKS:
            raise ValueError(f"task {name!r} already registered")
        TASKS[name] = CellTask(name=name, fn=fn, outputs=out_fn)
        return fn

    return deco


@dataclass
class SweepJob:
    """Grid description: axes are ordered major to minor (row-major)."""
    task: str
    axes: dict
    params: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 1
    checkpoint: Path | str | None = None
    flush_every: int = 32
    seed_policy: str = "cell"  # "major": one seed per first-axis value
                               # (common random numbers along the rest)


@dataclass
class SweepResult:
    task: str
    seed: int
    axis_names: tuple
    output_names: tuple
    coords: np.ndarray   # (n_cells, n_axes), lexicographic order
    values: np.ndarray   # (n_cells, n_outputs)

    def to_csv(self, path):
        cols = ",".join(self.axis_names + self.output_names)
        with open(path, "w", newline="\n") as fh:
            fh.write(f"# trapshuttle {__version__} sweep"
                     f" task={self.task} seed={self.seed}\n")
            fh.write(cols + "\n")
            for c, v in zip(self.coords, self.values):
                fh.write(",".join("%.17g" % x for x in c) + "," +
                         ",".join("%.17g" % x for x in v) + "\n")


def _canonical(job: SweepJob, n_outputs: int) -> dict:
    ax = hashlib.sha256()
    for name, vals in job.axes.items():
        ax.update(name.encode())
        ax.update(np.asarray(vals, dtype=float).tobytes())
    pj = json.dumps(job.params, sort_keys=True, separators=(",", ":"))
    return {
        "axes_sha256": ax.hexdigest(),
        "n_outputs": n_outputs,
        "params_sha256": hashlib.sha256(pj.encode()).hexdigest(),
        "seed": job.seed,
        "seed_policy": job.seed_policy,
        "shape": [int(np.asarray(v).size) for v in job.axes.values()],
        "task": job.task,
        "version": __version__,
    }


def _open_checkpoint(job: SweepJob, n_outputs: int):
    """Return ({index: outputs}, open append handle), creating or
    resuming the file at job.checkpoint."""
    path = Path(job.checkpoint)
    head = _canonical(job, n_outputs)
    head_bytes = json.dumps(head, sort_keys=True,
                            separators=(",", ":")).encode()
    rec_size = 8 + 8 * n_outputs + 4
    done: dict[int, tuple] = {}

    if not path.exists() or path.stat().st_size == 0:
        fh = open(path, "wb")
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(head_bytes)))
        fh.write(head_bytes)
        fh.write(struct.pack("<I", zlib.crc32(head_bytes)))
        fh.flush()
        return done, fh

    raw = path.read_bytes()
    if raw[:8] != _MAGIC or len(raw) < 12:
        raise CorruptCheckpointError(
            f"{path} is not a sweep checkpoint (bad magic); delete or "
            "move it aside and re-run to recompute from scratch")
    (hlen,) = struct.unpack_from("<I", raw, 8)
    if len(raw) < 12 + hlen + 4:
        raise CorruptCheckpointError(
            f"{path} header is truncated; delete or move it aside and "
            "re-run to recompute from scratch")
    got = raw[12:12 + hlen]
    (hcrc,) = struct.unpack_from("<I", raw, 12 + hlen)
    if zlib.crc32(got) != hcrc:
        raise CorruptCheckpointError(
            f"{path} header failed its checksum; delete or move it "
            "aside and re-run to recompute from scratch")
    stored = json.loads(got)
    for key in ("task", "seed", "seed_policy", "shape", "axes_sha256",
                "params_sha256", "n_outputs"):
        if stored.get(key) != head[key]:
            raise CheckpointMismatchError(
                f"{path} was written for a different job "
                f"({key}: {stored.get(key)!r} != {head[key]!r}); use a "
                "fresh checkpoint path or delete the old file")

    off = 12 + hlen + 4
    while off + rec_size <= len(raw):
        rec = raw[off:off + rec_size]
        (crc,) = struct.unpack_from("<I", rec, rec_size - 4)
        if zlib.crc32(rec[:-4]) != crc:
            n = (off - 12 - hlen - 4) // rec_size
            raise CorruptCheckpointError(
                f"{path} record {n} failed its checksum; the file was "
                "damaged after writing. Delete or move it aside and "
                "re-run to recompute from scratch")
        (idx,) = struct.unpack_from("<Q", rec, 0)
        vals = struct.unpack_from(f"<{n_outputs}d", rec, 8)
        if idx in done:
            raise CorruptCheckpointError(
                f"{path} contains duplicate records for cell {idx}; "
                "delete or move it aside and re-run to recompute")
        done[idx] = vals
        off += rec_size

    fh = open(path, "r+b")
    fh.seek(off)     # discard a torn final record, if any
    fh.truncate(off)
    return done, fh


def _append(fh, idx: int, vals, n_outputs: int):
    body = struct.pack("<Q", idx) + struct.pack(f"<{n_outputs}d", *vals)
    fh.write(body + struct.pack("<I", zlib.crc32(body)))


def _eval_cell(task_name: str, params: dict, seed: int, idx: int,
               coords: tuple):
    fn = TASKS[task_name].fn
    return idx, tuple(float(v) for v in fn(seed, coords, params))


def run(job: SweepJob) -> SweepResult:
    """Evaluate every grid cell exactly once, resuming from the
    checkpoint when one is given, and return the assembled table."""
    if job.task not in TASKS:
        raise ValueError(f"unknown task {job.task!r}; registered: "
                         f"{sorted(TASKS)}")
    if not job.axes:
        raise ValueError("axes must be non-empty")
    axes = {k: np.asarray(v, dtype=float).ravel()
            for k, v in job.axes.items()}
    if any(a.size == 0 for a in axes.values()):
        raise ValueError("every axis needs at least one value")
    if job.threads < 1:
        raise ValueError("threads must be >= 1")
    if job.seed_policy not in _SEED_POLICIES:
        raise ValueError(f"seed_policy must be one of {_SEED_POLICIES}")

    task = TASKS[job.task]
    out_names = tuple(task.outputs(job.params))
    n_out = len(out_names)
    shape = tuple(a.size for a in axes.values())
    n_cells = int(np.prod(shape))
    grids = [g.ravel() for g in np.meshgrid(*axes.values(), indexing="ij")]
    coords = np.column_stack(grids)

    def seed_of(flat: int) -> int:
        if job.seed_policy == "major":
            return cell_seed(job.seed, flat // int(np.prod(shape[1:])))
        return cell_seed(job.seed, flat)

    done: dict[int, tuple] = {}
    fh = None
    if job.checkpoint is not None:
        done, fh = _open_checkpoint(job, n_out)
    try:
        pending = [i for i in range(n_cells) if i not in done]
        since_flush = 0

        def record(idx, vals):
            nonlocal since_flush
            done[idx] = vals
            if fh is not None:
                _append(fh, idx, vals, n_out)
                since_flush += 1
                if since_flush >= job.flush_every:
                    fh.flush()
                    since_flush = 0

        if job.threads == 1 or len(pending) <= 1:
            for idx in pending:
                _, vals = _eval_cell(job.task, job.params, seed_of(idx),
                                     idx, tuple(coords[idx]))
                record(idx, vals)
        else:
            with ProcessPoolExecutor(max_workers=job.threads) as pool:
                futs = {
                    pool.submit(_eval_cell, job.task, job.params,
                                seed_of(idx), idx, tuple(coords[idx]))
                    for idx in pending}
                while futs:
                    ready, futs = wait(futs, return_when=FIRST_COMPLETED)
                    for fut in ready:
                        record(*fut.result())
        if fh is not None:
            fh.flush()
    finally:
        if fh is not None:
            fh.close()

    values = np.array([done[i] for i in range(n_cells)], dtype=float)
    values = values.reshape(n_cells, n_out)
    return SweepResult(task=job.task, seed=job.seed,
                       axis_names=tuple(axes.keys()),
                       output_names=out_names, coords=coords,
                       values=values)


@register_task("toy.wave", outputs=("value",))
def _toy_wave(seed, coords, params):
    # cheap but seed-sensitive: exercises the determinism contract
    rng = np.random.default_rng(seed)
    a = float(np.sin(np.prod(coords)))
    return (a + params.get("noise", 1e-6) * rng.standard_normal(),)


def _packet_row_outputs(params):
    return tuple(f"err{j}" for j in range(int(params["n_u"])))


@register_task("packet.row", outputs=_packet_row_outputs)
def _packet_row(seed, coords, params):
    """One anharmonicity row of |1 - E_f/E_i|(u), common random
    numbers along u (same substream seed for the whole row)."""
    from trapshuttle.ensemble import packet_cell

    xi = float(coords[0])
    us = np.linspace(params["u_min"], params["u_max"], int(params["n_u"]))
    out = []
    for u in us:
        val, ok = packet_cell(params["kind"], xi, float(u),
                              n_particles=int(params["n_particles"]),
                              width_over_d=params["width_over_d"],
                              seed=seed, order=int(params.get("order", 5)),
                              tol=params.get("tol", 1e-10))
        out.append(val if ok else np.nan)
    return tuple(out)

"""Ensemble orchestration: deterministic blocks, recorders, manifests, CSV output.

Reproducibility contract
------------------------
The ensemble is partitioned into fixed logical blocks of ``BLOCK_SIZE``
trajectories.  Block b of a run draws every random number it ever needs from
Philox streams keyed by (seed, stream b) with counters addressed by
(purpose, step).  Workers only decide *which thread* advances a block, never
what numbers it consumes, and recorder partials are merged in block order,
so output files are bit-identical for any worker count.  Per-trajectory
Hermitian symmetry is structural: state updates combine mirrored arrays with
real scalars only.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .dynamics import IntegratorConfig, guard_rows, step_rows
from .errors import MeasureParameterError, OverflowGuardError
from .measures import (
    CylinderDensity,
    MeasureSpec,
    density_from_descriptor,
    energy_enstrophy_batch,
    rejection_sample_batch,
    white_noise_batch,
)
from .observables import (
    MarginalHistogram,
    VarianceSummary,
    accumulate_mode_counts,
    energy_rows,
    histogram_extent,
    renormalized_energy_rows,
)
from .rng import RandomSource
from .spectral import ModeLattice, cached_lattice

BLOCK_SIZE = 1024

_PURPOSE_INIT = 0
_PURPOSE_NOISE = 1


@dataclass
class RunConfig:
    """Everything needed to reproduce one ensemble run."""

    n_max: int
    alpha: float
    beta_init: float
    dt: float
    t_final: float
    save_every: float
    ensemble_size: int
    scheme: str
    seed: int
    wick_cutoff: float = 1.0
    density_init: dict | None = None
    out_dir: str = "."
    workers: int = 1
    save_samples: int = 4
    stream_index: int = 0

    def validate(self) -> None:
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.save_every <= 0:
            raise ValueError("save_every must be positive")
        steps = self.save_every / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("save_every must be an integer multiple of dt")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        # delegate dt/scheme/alpha checks
        IntegratorConfig(dt=self.dt, scheme=self.scheme, alpha=self.alpha, t_final=self.t_final)
        MeasureSpec(beta=self.beta_init, n_max=self.n_max)
        if self.density_init is not None and self.density_init.get("form") != "zero":
            density_from_descriptor(self.density_init)

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(
            dt=self.dt, scheme=self.scheme, alpha=self.alpha, t_final=self.t_final
        )

    def to_json_dict(self) -> dict:
        out = asdict(self)
        # measure spec block in the interchange form {beta, N, wick_cutoff}
        out["measure"] = {
            "beta": self.beta_init,
            "N": self.n_max,
            "wick_cutoff": self.wick_cutoff,
        }
        return out


# ---------------------------------------------------------------------------
# Recorders: per-block partial statistics with deterministic merges


class VarianceRecorder:
    """Ensemble mean of |xi_k|^2 per half mode at each save time."""

    def __init__(self):
        self._partials: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def start_block(self, block_id: int, n_times: int, lattice: ModeLattice) -> None:
        n_half = len(lattice.half)
        self._partials[block_id] = (
            np.zeros((n_times, n_half)),
            np.zeros((n_times, n_half)),
        )

    def record(self, block_id: int, t_index: int, rows: np.ndarray, lattice: ModeLattice) -> None:
        sq = np.abs(rows[:, lattice.half_index]) ** 2
        sums, sums4 = self._partials[block_id]
        sums[t_index] += np.sum(sq, axis=0)
        sums4[t_index] += np.sum(sq * sq, axis=0)

    def summary(self, times: np.ndarray, lattice: ModeLattice, count: int) -> VarianceSummary:
        order = sorted(self._partials)
        sums = sum(self._partials[b][0] for b in order)
        sums4 = sum(self._partials[b][1] for b in order)
        mean = sums / count
        var = np.maximum(sums4 / count - mean ** 2, 0.0)
        stderr = np.sqrt(var / max(count - 1, 1))
        return VarianceSummary(
            times=times, modes=lattice.half, mean_sq=mean, stderr=stderr, count=count
        )


class ScalarRecorder:
    """Mean and stderr of scalar observables at each save time."""

    def __init__(self, wick_cutoff: float):
        self.wick_cutoff = wick_cutoff
        self.names = ("hnorm_sq", "enstrophy", "energy", "renormalized_energy")
        self._partials: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def start_block(self, block_id: int, n_times: int, lattice: ModeLattice) -> None:
        n = len(self.names)
        self._partials[block_id] = (np.zeros((n_times, n)), np.zeros((n_times, n)))

    def record(self, block_id: int, t_index: int, rows: np.ndarray, lattice: ModeLattice) -> None:
        hn = np.sum(np.abs(rows) ** 2, axis=1)
        en = energy_rows(lattice, rows)
        try:
            wick = renormalized_energy_rows(lattice, rows, self.wick_cutoff)
        except MeasureParameterError:
            wick = np.zeros(rows.shape[0])
        values = np.stack([hn, 0.5 * hn, en, wick], axis=1)
        sums, sq = self._partials[block_id]
        sums[t_index] += np.sum(values, axis=0)
        sq[t_index] += np.sum(values * values, axis=0)

    def rows(self, times: np.ndarray, count: int) -> list[tuple[float, str, float, float, int]]:
        order = sorted(self._partials)
        sums = sum(self._partials[b][0] for b in order)
        sq = sum(self._partials[b][1] for b in order)
        mean = sums / count
        var = np.maximum(sq / count - mean ** 2, 0.0)
        stderr = np.sqrt(var / max(count - 1, 1))
        out = []
        for ti, t in enumerate(times):
            for ni, name in enumerate(self.names):
                out.append((float(t), name, float(mean[ti, ni]), float(stderr[ti, ni]), count))
        return out


class HistogramRecorder:
    """Integer 2D counts of chosen mode marginals at each save time."""

    def __init__(self, modes: Sequence[tuple[int, int]], reference: MeasureSpec, bins: int = 64, n_sigmas: float = 6.0):
        self.modes = tuple(modes)
        self.reference = reference
        self.bins = bins
        self.extents = {m: histogram_extent(reference, m, n_sigmas) for m in self.modes}
        self._partials: dict[int, dict[tuple[int, int], np.ndarray]] = {}

    def start_block(self, block_id: int, n_times: int, lattice: ModeLattice) -> None:
        self._partials[block_id] = {
            m: np.zeros((n_times, self.bins, self.bins), dtype=np.int64) for m in self.modes
        }

    def record(self, block_id: int, t_index: int, rows: np.ndarray, lattice: ModeLattice) -> None:
        store = self._partials[block_id]
        for m in self.modes:
            values = rows[:, lattice.index_of(m)]
            store[m][t_index] += accumulate_mode_counts(values, self.extents[m], self.bins)

    def histogram(self, mode: tuple[int, int], t_index: int, count: int) -> MarginalHistogram:
        order = sorted(self._partials)
        counts = sum(self._partials[b][mode][t_index] for b in order)
        return MarginalHistogram(
            mode=mode, extent=self.extents[mode], counts=counts, total=count
        )


class FieldDumpRecorder:
    """Full coefficient snapshots of the first ``n_dump`` trajectories."""

    def __init__(self, n_dump: int):
        self.n_dump = n_dump
        self._partials: dict[int, dict[int, list[np.ndarray]]] = {}

    def start_block(self, block_id: int, n_times: int, lattice: ModeLattice) -> None:
        self._partials[block_id] = {}

    def record(
        self, block_id: int, t_index: int, rows: np.ndarray, lattice: ModeLattice,
        first_sample_id: int = 0,
    ) -> None:
        if first_sample_id >= self.n_dump:
            return
        take = min(self.n_dump - first_sample_id, rows.shape[0])
        self._partials[block_id].setdefault(t_index, []).append(rows[:take].copy())

    def snapshots(self, t_index: int) -> tuple[np.ndarray, np.ndarray] | None:
        pieces = []
        ids = []
        next_id = 0
        for b in sorted(self._partials):
            for arr in self._partials[b].get(t_index, []):
                pieces.append(arr)
                ids.extend(range(next_id, next_id + arr.shape[0]))
                next_id += arr.shape[0]
        if not pieces:
            return None
        return np.concatenate(pieces, axis=0), np.array(ids)


class IncrementRecorder:
    """Fourth and eighth moments of chart-coordinate increments from t = 0."""

    def __init__(self, modes: Sequence[tuple[int, int]]):
        self.modes = tuple(modes)
        self._initial: dict[int, np.ndarray] = {}
        self._partials: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def start_block(self, block_id: int, n_times: int, lattice: ModeLattice) -> None:
        self._partials[block_id] = (
            np.zeros((n_times, len(self.modes))),
            np.zeros((n_times, len(self.modes))),
        )

    def record(self, block_id: int, t_index: int, rows: np.ndarray, lattice: ModeLattice) -> None:
        idx = [lattice.index_of(m) for m in self.modes]
        current = rows[:, idx]
        if t_index == 0:
            self._initial[block_id] = current.copy()
            return
        delta = np.sqrt(2.0) * (current - self._initial[block_id]).real
        m4, m8 = self._partials[block_id]
        d4 = delta ** 4
        m4[t_index] += np.sum(d4, axis=0)
        m8[t_index] += np.sum(d4 * d4, axis=0)

    def moments(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        order = sorted(self._partials)
        m4 = sum(self._partials[b][0] for b in order) / count
        m8 = sum(self._partials[b][1] for b in order) / count
        stderr = np.sqrt(np.maximum(m8 - m4 ** 2, 0.0) / count)
        return m4, stderr


# ---------------------------------------------------------------------------
# Ensemble evolution


@dataclass
class EnsembleResult:
    config: RunConfig
    times: np.ndarray
    variance: VarianceSummary
    scalar_rows: list
    recorders: dict
    overflow: bool = False
    overflow_message: str = ""


def _initial_rows(
    config: RunConfig, lattice: ModeLattice, gen: np.random.Generator, count: int
) -> np.ndarray:
    if config.density_init is not None:
        if config.density_init.get("form") == "zero":
            return np.zeros((count, lattice.size), dtype=np.complex128)
        density = density_from_descriptor(config.density_init)
        rows, _, _ = rejection_sample_batch(density, lattice, gen, count)
        return rows
    if config.beta_init == 0.0:
        return white_noise_batch(lattice, gen, count)
    spec = MeasureSpec(beta=config.beta_init, n_max=config.n_max)
    return energy_enstrophy_batch(spec, lattice, gen, count)


def _block_ranges(ensemble_size: int) -> list[tuple[int, int, int]]:
    """(block_id, start, stop) partition, independent of worker count."""
    out = []
    start = 0
    block_id = 0
    while start < ensemble_size:
        stop = min(start + BLOCK_SIZE, ensemble_size)
        out.append((block_id, start, stop))
        block_id += 1
        start = stop
    return out


def run_ensemble(config: RunConfig, extra_recorders: dict | None = None) -> EnsembleResult:
    """Evolve the ensemble, returning merged recorder summaries.

    ``extra_recorders`` maps names to recorder objects implementing
    start_block/record; the built-in variance and scalar recorders are
    always active.
    """
    config.validate()
    lattice = cached_lattice(config.n_max)
    integ = config.integrator()
    steps_per_save = int(round(config.save_every / config.dt))
    n_steps = integ.n_steps
    save_steps = list(range(0, n_steps + 1, steps_per_save))
    save_step_set = set(save_steps)
    times = np.array([s * config.dt for s in save_steps])

    variance = VarianceRecorder()
    scalars = ScalarRecorder(config.wick_cutoff)
    recorders = {"variance": variance, "scalars": scalars}
    if extra_recorders:
        recorders.update(extra_recorders)

    base = RandomSource(config.seed, config.stream_index)
    blocks = _block_ranges(config.ensemble_size)
    overflow: list[str] = []

    def run_block(block) -> None:
        block_id, start, stop = block
        count = stop - start
        bsrc = base.substream(block_id)
        for rec in recorders.values():
            rec.start_block(block_id, len(save_steps), lattice)
        rows = _initial_rows(config, lattice, bsrc.block_generator(_PURPOSE_INIT, 0), count)
        t_index = 0
        _record_all(recorders, block_id, t_index, rows, lattice, start)
        for step in range(1, n_steps + 1):
            gen = (
                bsrc.block_generator(_PURPOSE_NOISE, step)
                if config.alpha > 0 and config.scheme != "explicit-rk4"
                else None
            )
            try:
                rows = step_rows(lattice, rows, integ, gen)
                guard_rows(rows, step)
            except OverflowGuardError as exc:
                overflow.append(f"block {block_id}: {exc}")
                return
            if step in save_step_set:
                t_index += 1
                _record_all(recorders, block_id, t_index, rows, lattice, start)

    if config.workers == 1:
        for block in blocks:
            run_block(block)
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(run_block, blocks))

    if overflow:
        return EnsembleResult(
            config=config,
            times=times,
            variance=variance.summary(times, lattice, config.ensemble_size),
            scalar_rows=[],
            recorders=recorders,
            overflow=True,
            overflow_message="; ".join(sorted(overflow)),
        )

    return EnsembleResult(
        config=config,
        times=times,
        variance=variance.summary(times, lattice, config.ensemble_size),
        scalar_rows=scalars.rows(times, config.ensemble_size),
        recorders=recorders,
    )


def _record_all(recorders, block_id, t_index, rows, lattice, start) -> None:
    for rec in recorders.values():
        if isinstance(rec, FieldDumpRecorder):
            rec.record(block_id, t_index, rows, lattice, first_sample_id=start)
        else:
            rec.record(block_id, t_index, rows, lattice)


# ---------------------------------------------------------------------------
# Manifests and file output


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    artifact_version: str = __version__
    started_utc: str = ""
    finished_utc: str = ""
    status: str = "running"
    files: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def start_manifest(command: str, config: dict, out_dir: Path) -> RunManifest:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command=command, config=config, started_utc=utc_now())
    manifest.write(out_dir)
    return manifest


def finalize_manifest(
    manifest: RunManifest, out_dir: Path, files: Sequence[Path], status: str = "complete"
) -> Path:
    manifest.files = {p.name: file_digest(p) for p in files}
    manifest.finished_utc = utc_now()
    manifest.status = status
    return manifest.write(out_dir)


def verify_manifest(run_dir: Path) -> list[str]:
    """Digest mismatches (empty list = everything checks out)."""
    with open(run_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    problems = []
    for name, digest in manifest.get("files", {}).items():
        path = run_dir / name
        if not path.exists():
            problems.append(f"{name}: missing")
        elif file_digest(path) != digest:
            problems.append(f"{name}: digest mismatch")
    return problems


def default_out_dir() -> str:
    return os.environ.get("SPECTRAL_EULER_OUT", ".")


# CSV writers (repr formatting gives shortest round-trip floats, so identical
# runs produce byte-identical files).


def write_summary_csv(path: Path, result: EnsembleResult) -> None:
    with open(path, "w") as fh:
        fh.write("t,observable,mean,stderr,count\n")
        for t, name, mean, stderr, count in result.scalar_rows:
            fh.write(f"{t!r},{name},{mean!r},{stderr!r},{count}\n")
        summary = result.variance
        for ti, t in enumerate(summary.times):
            for mi, (kx, ky) in enumerate(summary.modes):
                fh.write(
                    f"{float(t)!r},mode_var:{kx}:{ky},{float(summary.mean_sq[ti, mi])!r},"
                    f"{float(summary.stderr[ti, mi])!r},{summary.count}\n"
                )


def write_trajectories_csv(path: Path, result: EnsembleResult, lattice: ModeLattice) -> None:
    dump = result.recorders.get("fields")
    if dump is None:
        return
    with open(path, "w") as fh:
        fh.write("t,sample_id,kx,ky,re,im\n")
        for ti, t in enumerate(result.times):
            snap = dump.snapshots(ti)
            if snap is None:
                continue
            rows, ids = snap
            for sid, row in zip(ids, rows):
                for (kx, ky), c in zip(lattice.modes, row):
                    fh.write(
                        f"{float(t)!r},{sid},{kx},{ky},{float(c.real)!r},{float(c.imag)!r}\n"
                    )

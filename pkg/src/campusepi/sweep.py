"""Parameter grid, replicated simulation sweeps, and trajectory summaries."""

from __future__ import annotations

import csv
import io
import itertools
import math
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Iterable, Iterator, Sequence

import numpy as np

from .epidemic import CompiledNetwork, EpidemicParams, SimConfig, Trajectory, run_simulation
from .network import (
    EnrollmentNetwork,
    NetworkStats,
    apply_threshold,
    drop_degenerate,
    largest_component,
    network_stats,
    thin_uniform,
    thinning_target,
)

PARAM_NAMES = ("theta_I2", "rho_A", "rho_I1", "q_E", "q_A", "q_I1", "q_I2", "q_EA")
GRID_ORDER = PARAM_NAMES + ("phi",)
INF = math.inf
MODES = ("threshold", "thin")


@dataclass(frozen=True)
class ParameterGrid:
    theta_I2: tuple[float, ...] = (0.141, 0.198, 0.240)
    rho_A: tuple[float, ...] = (0.4, 0.75, 1.0)
    rho_I1: tuple[float, ...] = (0.18, 0.63, 2.26)
    q_E: tuple[float, ...] = (0.168, 0.182, 0.196)
    q_A: tuple[float, ...] = (0.115, 0.138, 0.169)
    q_I1: tuple[float, ...] = (0.333, 0.435, 0.833)
    q_I2: tuple[float, ...] = (0.063, 0.075, 0.092)
    q_EA: tuple[float, ...] = (0.09, 0.18, 0.26)
    phi: tuple[float, ...] = (20, 50, 100, INF)

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name):
                raise ValueError(f"grid list for {f.name} is empty")

    def __len__(self) -> int:
        return math.prod(len(getattr(self, n)) for n in GRID_ORDER)

    def replace(self, **kw) -> "ParameterGrid":
        cur = {n: getattr(self, n) for n in GRID_ORDER}
        cur.update({k: tuple(v) for k, v in kw.items()})
        return ParameterGrid(**cur)

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "ParameterGrid":
        out = {}
        for key, text in kv.items():
            if key not in GRID_ORDER:
                raise ValueError(f"unknown grid key {key!r}")
            out[key] = tuple(parse_phi(x) if key == "phi" else float(x) for x in text.split(","))
        return cls().replace(**out)

    def to_kv(self) -> dict[str, str]:
        return {n: ",".join(format_value(v) for v in getattr(self, n)) for n in GRID_ORDER}


@dataclass(frozen=True)
class Combo:
    index: int
    params: EpidemicParams
    phi: float

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self.params, n) for n in PARAM_NAMES) + (self.phi,)


def build_grid(values: ParameterGrid) -> list[Combo]:
    """Row-major Cartesian product over ``GRID_ORDER`` (phi varies fastest)."""
    lists = [getattr(values, n) for n in GRID_ORDER]
    return [
        Combo(i, EpidemicParams(*vals[:-1]), vals[-1])
        for i, vals in enumerate(itertools.product(*lists))
    ]


def parse_phi(text: str) -> float:
    t = str(text).strip().lower()
    if t in ("inf", "infinity", "∞"):
        return INF
    v = float(t)
    return INF if math.isinf(v) else v


def format_value(v: float) -> str:
    if math.isinf(v):
        return "inf"
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def summarize(traj: Trajectory, N: int | None = None) -> tuple[float, float]:
    """Cumulative incidence (share that left S) and peak share in E, A, I1, I2."""
    counts = traj.counts
    N = int(counts[0].sum()) if N is None else N
    cii = (N - counts[-1, 0]) / N
    peak = counts[:, 1:5].sum(axis=1).max() / N
    return float(cii), float(peak)


def logit(p, n_max: int) -> tuple[np.ndarray, int]:
    """Clamped logit with ``eps = 1 / (2 * n_max)``; returns values and clamp count."""
    eps = 1 / (2 * n_max)
    arr = np.asarray(p, dtype=float)
    clamped = np.clip(arr, eps, 1 - eps)
    n_clamped = int(np.count_nonzero(clamped != arr))
    return np.log(clamped / (1 - clamped)), n_clamped


def _label(text: str) -> int:
    return zlib.crc32(text.encode())


def run_seed(master_seed: int, combo_index: int, replicate: int, mode: str) -> int:
    """64-bit seed for one run, independent of how runs are scheduled."""
    ss = np.random.SeedSequence([master_seed, combo_index, replicate, _label(mode)])
    return int(ss.generate_state(1, np.uint64)[0])


def thinning_rng(master_seed: int, phi: float) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([master_seed, _label("thin"), _label(format_value(phi))])
    )


@dataclass(frozen=True)
class SweepRecord:
    combo_index: int
    theta_I2: float
    rho_A: float
    rho_I1: float
    q_E: float
    q_A: float
    q_I1: float
    q_I2: float
    q_EA: float
    phi: float
    mode: str
    replicate: int
    seed: int
    N: int
    cii: float
    peak: float
    final_day_active: int


SWEEP_HEADER = tuple(f.name for f in fields(SweepRecord))


def reduce_network(
    base: EnrollmentNetwork, phi: float, mode: str, master_seed: int = 0
) -> EnrollmentNetwork:
    """Threshold (or thin to the matching enrollment count), then keep the LCC."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    base = drop_degenerate(base)
    if mode == "threshold":
        return largest_component(apply_threshold(base, phi))
    if math.isinf(phi):
        raise ValueError("thinning requires a finite phi")
    target = thinning_target(base, phi)
    return largest_component(thin_uniform(base, target, thinning_rng(master_seed, phi)))


# worker-process state; set by _init_worker
_NETS: dict[float, CompiledNetwork] = {}


def _init_worker(nets: dict[float, CompiledNetwork]) -> None:
    global _NETS
    _NETS = nets


def _run_batch(batch: Sequence[tuple[Combo, int, int]], cfg: SimConfig, mode: str, keep: bool):
    out = []
    for combo, rep, seed in batch:
        net = _NETS[combo.phi]
        traj = run_simulation(net, combo.params, SimConfig(cfg.n_days, cfg.n_initial, seed))
        cii, peak = summarize(traj, net.n_students)
        rec = SweepRecord(
            combo.index, *combo.values(), mode, rep, seed, net.n_students,
            cii, peak, int(traj.counts[-1, 1:5].sum()),
        )
        out.append((rec, traj if keep else None))
    return out


@dataclass
class SweepResult:
    records: list[SweepRecord]
    stats: dict[float, NetworkStats]
    trajectories: dict[tuple[int, int], Trajectory] = field(default_factory=dict)


def run_sweep(
    base_net: EnrollmentNetwork,
    grid: ParameterGrid | Sequence[Combo],
    reps: int,
    master_seed: int,
    mode: str = "threshold",
    sim: SimConfig = SimConfig(),
    jobs: int = 1,
    keep_trajectories: bool = False,
    progress: bool = False,
    batch_size: int = 64,
) -> SweepResult:
    combos = build_grid(grid) if isinstance(grid, ParameterGrid) else list(grid)
    phis = sorted({c.phi for c in combos})
    if mode == "thin" and any(math.isinf(p) for p in phis):
        raise ValueError("thin mode excludes phi = inf")
    reduced = {phi: reduce_network(base_net, phi, mode, master_seed) for phi in phis}
    stats = {phi: network_stats(net) for phi, net in reduced.items()}
    nets = {phi: CompiledNetwork(net) for phi, net in reduced.items()}
    for phi, net in nets.items():
        if net.n_students < sim.n_initial:
            raise ValueError(f"reduced network at phi={phi} has only {net.n_students} students")

    tasks = [(c, r, run_seed(master_seed, c.index, r, mode)) for c in combos for r in range(reps)]
    batches = [tasks[i : i + batch_size] for i in range(0, len(tasks), batch_size)]
    results = []
    done = 0

    def report(n):
        nonlocal done
        done += n
        if progress:
            print(f"{done}/{len(tasks)}", file=sys.stderr, flush=True)

    if jobs <= 1:
        _init_worker(nets)
        for b in batches:
            results.extend(_run_batch(b, sim, mode, keep_trajectories))
            report(len(b))
    else:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(nets,)) as pool:
            futures = [pool.submit(_run_batch, b, sim, mode, keep_trajectories) for b in batches]
            for fut in futures:
                res = fut.result()
                results.extend(res)
                report(len(res))

    results.sort(key=lambda rt: (rt[0].combo_index, rt[0].replicate))
    trajs = {(r.combo_index, r.replicate): t for r, t in results if t is not None}
    return SweepResult([r for r, _ in results], stats, trajs)


def _fmt(v) -> str:
    if isinstance(v, float):
        return format_value(v)
    return str(v)


def write_records(records: Iterable[SweepRecord], out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in records:
        w.writerow([_fmt(getattr(r, n)) for n in SWEEP_HEADER])


def records_to_csv(records: Iterable[SweepRecord]) -> str:
    buf = io.StringIO()
    write_records(records, buf)
    return buf.getvalue()


def read_records(source) -> Iterator[SweepRecord]:
    reader = csv.DictReader(source)
    missing = [h for h in SWEEP_HEADER if h not in (reader.fieldnames or ())]
    if missing:
        raise KeyError(missing[0])
    ints = {"combo_index", "replicate", "seed", "N", "final_day_active"}
    for row in reader:
        kw = {}
        for n in SWEEP_HEADER:
            v = row[n]
            if n == "mode":
                kw[n] = v
            elif n in ints:
                kw[n] = int(v)
            elif n == "phi":
                kw[n] = parse_phi(v)
            else:
                kw[n] = float(v)
        yield SweepRecord(**kw)


def subsample(combos: Sequence[Combo], n: int, seed: int) -> list[Combo]:
    """Seeded random subset of ``n`` combinations, kept in combo_index order."""
    if n >= len(combos):
        return list(combos)
    rng = np.random.default_rng(np.random.SeedSequence([seed, _label("subsample")]))
    pick = np.sort(rng.choice(len(combos), size=n, replace=False))
    return [combos[i] for i in pick]

"""Experiment commands: generation, learning, evaluation, sweeps and benchmarks.

Every command is a plain function so it can be driven from tests as well as
from the command line.  Outputs are deterministic given the inputs, except
for the timing columns of sweeps and benchmarks.

Seeds.  A generated model is fully determined by one 64-bit seed ``s``: the
DAG comes from ``derive_seed(s, 1)`` and the parameters and data from
``derive_seed(s, 2)``.  A sweep trial uses ``s = derive_seed(base_seed,
trial, p, n)``, and its random-ordering baseline draws from
``derive_seed(s, 3)``, so ``generate --seed s`` reproduces any sweep trial.
"""

from __future__ import annotations

import csv
import gc
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

from .data import DataError, Dataset, ingest_real_csv, read_csv, write_csv
from .evaluation import dag_metrics, mec_metrics, ordering_precision
from .ghd import GhdError, GhdFamily
from .graph import Dag, Skeleton, orient_by_ordering, random_dag, read_dag, read_skeleton, skeleton_of, write_edge_list
from .mrs import ScoreConfig, estimate_ordering, ods_ordering, plug_in_hyper_poisson, random_ordering, write_trace
from .sampler import Draw, regenerate_until_valid
from .seeding import derive_seed
from .skeleton import CiConfig, learn_skeleton

log = logging.getLogger(__name__)

MODEL_KINDS = ("poisson", "hybrid")
METHODS = ("mrs", "ods", "random")
SKELETON_MODES = ("oracle", "learned", "file")

DAG_SEED_TAG = 1
MODEL_SEED_TAG = 2
RANDOM_ORDER_TAG = 3


class SpecError(ValueError):
    """Invalid sweep specification or command argument."""


class InvariantError(RuntimeError):
    """An internal consistency check failed."""


# ---------------------------------------------------------------- families


def parse_families_flag(text: str) -> str | GhdFamily:
    """``true`` and ``auto-hyperpoisson`` stay symbolic; the rest become a family."""
    text = text.strip().lower()
    if text in ("true", "auto-hyperpoisson"):
        return text
    if text == "poisson" or text.startswith("hyperpoisson:"):
        try:
            return GhdFamily.parse(text)
        except GhdError as exc:
            raise SpecError(str(exc)) from None
    raise SpecError(f"families must be true, poisson, hyperpoisson:b or auto-hyperpoisson, got {text!r}")


def write_families(path: str | Path, families: Sequence[GhdFamily]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# node\tfamily\n")
        for j, fam in enumerate(families):
            fh.write(f"{j}\t{fam.label}\n")


def read_families(path: str | Path, p: int) -> tuple[GhdFamily, ...]:
    out: dict[int, GhdFamily] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'node<TAB>family'")
        try:
            j = int(parts[0])
            out[j] = GhdFamily.parse(parts[1])
        except (ValueError, GhdError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    if sorted(out) != list(range(p)):
        raise DataError(f"{path}: families must cover nodes 0..{p - 1} exactly once")
    return tuple(out[j] for j in range(p))


def resolve_families(flag: str | GhdFamily, data: Dataset, true_families: Sequence[GhdFamily] | None) -> tuple[GhdFamily, ...]:
    if isinstance(flag, GhdFamily):
        return (flag,) * data.p
    if flag == "auto-hyperpoisson":
        return plug_in_hyper_poisson(data)
    if true_families is None:
        raise SpecError("families=true needs the generating model's families")
    return tuple(true_families)


# --------------------------------------------------------------- generation


def generate_model(kind: str, p: int, d: int, n: int, seed: int) -> tuple[Dag, Draw]:
    if kind not in MODEL_KINDS:
        raise SpecError(f"unknown model {kind!r}")
    dag = random_dag(p, d, rng_seed=derive_seed(seed, DAG_SEED_TAG))
    return dag, regenerate_until_valid(dag, kind, n, derive_seed(seed, MODEL_SEED_TAG))


def cmd_generate(kind: str, p: int, d: int, n: int, seed: int, out_data, out_graph, out_families=None) -> Draw:
    """Write the dataset CSV, the true DAG edge list and optionally the node families."""
    dag, draw = generate_model(kind, p, d, n, seed)
    write_csv(out_data, draw.data)
    write_edge_list(out_graph, p, dag.edges)
    if out_families is not None:
        write_families(out_families, draw.model.families)
    return draw


# ----------------------------------------------------------------- learning


@dataclass(frozen=True)
class LearnOutcome:
    dag: Dag
    skeleton: Skeleton
    families: tuple[GhdFamily, ...]
    step1_seconds: float
    step2_seconds: float


def _skeleton_for(mode: str, data: Dataset, skeleton_file, ci: CiConfig) -> Skeleton:
    if mode == "oracle":
        if skeleton_file is None:
            raise SpecError("--skeleton oracle needs the true graph via --skeleton-file")
        return skeleton_of(read_dag(skeleton_file, data.p))
    if mode == "file":
        if skeleton_file is None:
            raise SpecError("--skeleton file needs --skeleton-file")
        return read_skeleton(skeleton_file, data.p)
    if mode == "learned":
        return learn_skeleton(data, ci)
    raise SpecError(f"unknown skeleton mode {mode!r}")


def cmd_learn(
    data_path,
    skeleton_mode: str,
    out_graph,
    skeleton_file=None,
    families: str = "poisson",
    families_file=None,
    r: int = 2,
    n_min: int = 1,
    alpha: float = 0.05,
    max_conditioning: int = 2,
    trace_path=None,
) -> LearnOutcome:
    """Learn a DAG from a dataset CSV and write its edge list (and score trace)."""
    data = read_csv(data_path)
    flag = parse_families_flag(families)
    true_fams = None
    if flag == "true":
        if families_file is None:
            raise SpecError("families=true needs a families file")
        true_fams = read_families(families_file, data.p)
    fams = resolve_families(flag, data, true_fams)
    cfg = ScoreConfig(r=r, n_min=n_min, families=fams)
    ci = CiConfig(alpha=alpha, max_conditioning=max_conditioning)

    t0 = time.perf_counter()
    skeleton = _skeleton_for(skeleton_mode, data, skeleton_file, ci)
    t1 = time.perf_counter()
    ordering, trace = estimate_ordering(data, skeleton, cfg)
    dag = orient_by_ordering(skeleton, ordering)
    t2 = time.perf_counter()
    if skeleton_of(dag) != skeleton:
        raise InvariantError("orientation changed the skeleton")

    write_edge_list(out_graph, data.p, dag.edges)
    if trace_path is not None:
        comments = [f"r={r}", f"n_min={n_min}", f"skeleton={skeleton_mode}", f"ordering={';'.join(map(str, ordering))}"]
        if flag == "auto-hyperpoisson":
            comments += [f"b_hat[{j}]={fam.lower[0]!r}" for j, fam in enumerate(fams)]
        else:
            comments += [f"family[{j}]={fam.label}" for j, fam in enumerate(fams)]
        write_trace(trace_path, trace, comments)
    return LearnOutcome(dag, skeleton, fams, t1 - t0, t2 - t1)


# --------------------------------------------------------------- evaluation


def cmd_eval(true_graph, est_graph, mode: str = "dag") -> dict[str, float | int]:
    true_dag = read_dag(true_graph)
    est_dag = read_dag(est_graph)
    if true_dag.node_count != est_dag.node_count:
        raise DataError(f"node counts differ: {true_dag.node_count} vs {est_dag.node_count}")
    if mode == "dag":
        m = dag_metrics(true_dag, est_dag)
    elif mode == "mec":
        m = mec_metrics(true_dag, est_dag)
    else:
        raise SpecError(f"eval mode must be dag or mec, got {mode!r}")
    return {
        "precision": m.precision,
        "recall": m.recall,
        "true_edges": m.true_edge_count,
        "estimated_edges": m.estimated_edge_count,
        "correct_edges": m.correct_count,
    }


def format_metrics(metrics: dict[str, float | int]) -> str:
    lines = []
    for key, value in metrics.items():
        lines.append(f"{key}={value:.6f}" if isinstance(value, float) else f"{key}={value}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepSpec:
    model_kind: str
    p_grid: tuple[int, ...]
    n_grid: tuple[int, ...]
    d: int
    r_grid: tuple[int, ...]
    n_min: int
    trials: int
    skeleton_mode: str
    base_seed: int
    output_path: Path
    methods: tuple[str, ...] = ("mrs",)
    families: str = "true"
    alpha: float = 0.05
    max_conditioning: int = 2
    skeleton_file: str | None = None

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise SpecError(f"model must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        for name in ("p_grid", "n_grid", "r_grid", "methods"):
            if not getattr(self, name):
                raise SpecError(f"{name} must be nonempty")
        if self.trials < 1:
            raise SpecError("trials must be >= 1")
        if min(self.p_grid) < 2 or min(self.n_grid) < 2 or self.d < 1 or self.n_min < 1:
            raise SpecError("need p >= 2, n >= 2, d >= 1 and n_min >= 1")
        if min(self.r_grid) < 2:
            raise SpecError("r values must be >= 2")
        if self.skeleton_mode not in SKELETON_MODES:
            raise SpecError(f"skeleton must be one of {SKELETON_MODES}")
        if self.skeleton_mode == "file" and not self.skeleton_file:
            raise SpecError("skeleton=file needs skeleton_file, a path template using {p}, {n} and {trial}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise SpecError(f"unknown methods {sorted(unknown)}")
        parse_families_flag(self.families)
        try:
            CiConfig(self.alpha, self.max_conditioning)
        except ValueError as exc:
            raise SpecError(str(exc)) from None


_SPEC_KEYS = {
    "model": ("model_kind", str),
    "p": ("p_grid", "ints"),
    "n": ("n_grid", "ints"),
    "d": ("d", int),
    "r": ("r_grid", "ints"),
    "n_min": ("n_min", int),
    "trials": ("trials", int),
    "skeleton": ("skeleton_mode", str),
    "base_seed": ("base_seed", int),
    "output": ("output_path", Path),
    "methods": ("methods", "strs"),
    "families": ("families", str),
    "alpha": ("alpha", float),
    "max_cond": ("max_conditioning", int),
    "skeleton_file": ("skeleton_file", str),
}
_SPEC_DEFAULTS = {"r_grid": (2,), "n_min": 1, "d": 2, "base_seed": 0}
_REQUIRED = ("model_kind", "p_grid", "n_grid", "trials", "skeleton_mode", "output_path")


def parse_sweep_spec(text: str, base_dir: Path | None = None) -> SweepSpec:
    """Parse ``key = value`` lines; grids are comma-separated, ``#`` starts a comment.

    A relative ``output`` is resolved against ``base_dir`` when given.
    """
    values: dict = dict(_SPEC_DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not value:
            raise SpecError(f"line {lineno}: expected 'key = value'")
        if key not in _SPEC_KEYS:
            raise SpecError(f"line {lineno}: unknown key {key!r}")
        name, kind = _SPEC_KEYS[key]
        try:
            if kind == "ints":
                parsed = tuple(int(v) for v in value.split(","))
            elif kind == "strs":
                parsed = tuple(v.strip() for v in value.split(",") if v.strip())
            else:
                parsed = kind(value)
        except ValueError:
            raise SpecError(f"line {lineno}: bad value {value!r} for {key}") from None
        values[name] = parsed
    missing = [k for k, (name, _) in _SPEC_KEYS.items() if name in _REQUIRED and name not in values]
    if missing:
        raise SpecError(f"missing keys: {', '.join(missing)}")
    out = values["output_path"]
    if base_dir is not None and not out.is_absolute():
        values["output_path"] = base_dir / out
    return SweepSpec(**values)


def read_sweep_spec(path) -> SweepSpec:
    path = Path(path)
    return parse_sweep_spec(path.read_text(encoding="utf-8"), path.parent)


@dataclass(frozen=True)
class RunRecord:
    trial: int
    p: int
    n: int
    d: int
    r: int | None
    method: str
    skeleton_mode: str
    precision: float
    recall: float
    mec_precision: float
    mec_recall: float
    ordering_precision: float
    step1_seconds: float
    step2_seconds: float

    def __post_init__(self):
        for name in ("precision", "recall", "mec_precision", "mec_recall", "ordering_precision"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvariantError(f"{name}={v} outside [0, 1]")
        if self.step1_seconds < 0 or self.step2_seconds < 0:
            raise InvariantError("negative timing")

    @property
    def key(self) -> tuple:
        return (self.p, self.n, self.trial, self.method, self.r or 0)

    def row(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                out.append("")
            elif f.name.endswith("_seconds"):
                out.append(f"{v:.6f}")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out

    @classmethod
    def from_row(cls, row: dict[str, str]) -> RunRecord:
        kw = {}
        for f in fields(cls):
            text = row[f.name]
            if f.name in ("method", "skeleton_mode"):
                kw[f.name] = text
            elif f.name == "r":
                kw[f.name] = int(text) if text else None
            elif f.name in ("trial", "p", "n", "d"):
                kw[f.name] = int(text)
            else:
                kw[f.name] = float(text)
        return cls(**kw)


RUN_FIELDS = tuple(f.name for f in fields(RunRecord))


def trial_seed(base_seed: int, trial: int, p: int, n: int) -> int:
    return derive_seed(base_seed, trial, p, n)


def rows_per_job(spec: SweepSpec) -> int:
    return sum(len(spec.r_grid) if m == "mrs" else 1 for m in spec.methods)


def _record(spec, trial, p, n, r, method, true_dag, skeleton, ordering, t1, t2) -> RunRecord:
    est = orient_by_ordering(skeleton, ordering)
    dm = dag_metrics(true_dag, est)
    mm = mec_metrics(true_dag, est)
    return RunRecord(
        trial, p, n, spec.d, r, method, spec.skeleton_mode,
        dm.precision, dm.recall, mm.precision, mm.recall,
        ordering_precision(true_dag, ordering), t1, t2,
    )


def run_trial(spec: SweepSpec, p: int, n: int, trial: int) -> list[RunRecord]:
    """All method rows for one (p, n, trial) grid cell, sharing one model and dataset."""
    seed = trial_seed(spec.base_seed, trial, p, n)
    true_dag, draw = generate_model(spec.model_kind, p, spec.d, n, seed)
    data = draw.data
    ci = CiConfig(spec.alpha, spec.max_conditioning)

    t0 = time.perf_counter()
    if spec.skeleton_mode == "oracle":
        skeleton = skeleton_of(true_dag)
    elif spec.skeleton_mode == "learned":
        skeleton = learn_skeleton(data, ci)
    else:
        skeleton = read_skeleton(spec.skeleton_file.format(p=p, n=n, trial=trial), p)
    t1 = time.perf_counter() - t0

    fams = resolve_families(parse_families_flag(spec.families), data, draw.model.families)
    records = []
    for method in spec.methods:
        if method == "mrs":
            for r in spec.r_grid:
                t = time.perf_counter()
                ordering, _ = estimate_ordering(data, skeleton, ScoreConfig(r=r, n_min=spec.n_min, families=fams))
                records.append(_record(spec, trial, p, n, r, method, true_dag, skeleton, ordering, t1, time.perf_counter() - t))
        elif method == "ods":
            t = time.perf_counter()
            ordering = ods_ordering(data, skeleton, spec.n_min)
            records.append(_record(spec, trial, p, n, None, method, true_dag, skeleton, ordering, t1, time.perf_counter() - t))
        else:
            t = time.perf_counter()
            ordering = random_ordering(p, derive_seed(seed, RANDOM_ORDER_TAG))
            records.append(_record(spec, trial, p, n, None, method, true_dag, skeleton, ordering, t1, time.perf_counter() - t))
    return records


def _jobs(spec: SweepSpec) -> list[tuple[int, int, int]]:
    return [(p, n, t) for p in sorted(set(spec.p_grid)) for n in sorted(set(spec.n_grid)) for t in range(spec.trials)]


def _read_partial(path: Path, per_job: int) -> dict[tuple[int, int, int], list[RunRecord]]:
    """Completed jobs from a previous partial run; incomplete jobs are dropped."""
    if not path.exists():
        return {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RUN_FIELDS:
            raise DataError(f"{path}: existing file does not have the sweep header")
        done: dict[tuple[int, int, int], list[RunRecord]] = {}
        for row in reader:
            rec = RunRecord.from_row(row)
            done.setdefault((rec.p, rec.n, rec.trial), []).append(rec)
    return {k: v for k, v in done.items() if len(v) == per_job}


def _run_job(args):
    spec, p, n, trial = args
    return (p, n, trial), run_trial(spec, p, n, trial)


def cmd_sweep(spec: SweepSpec, jobs: int = 1, resume: bool = True) -> list[RunRecord]:
    """Run every (p, n, trial) job, flushing rows as they finish, then sort canonically.

    With ``resume`` an existing output file is read back and its complete
    jobs are kept, so an interrupted sweep continues where it stopped.
    """
    out = Path(spec.output_path)
    per_job = rows_per_job(spec)
    done = _read_partial(out, per_job) if resume else {}
    todo = [job for job in _jobs(spec) if job not in done]
    log.info("sweep: %d jobs done, %d to run", len(done), len(todo))

    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUN_FIELDS)
        for recs in done.values():
            writer.writerows(rec.row() for rec in recs)
        fh.flush()

        def emit(key, recs):
            done[key] = recs
            writer.writerows(rec.row() for rec in recs)
            fh.flush()

        if jobs <= 1 or len(todo) <= 1:
            for p, n, trial in todo:
                emit((p, n, trial), run_trial(spec, p, n, trial))
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_run_job, (spec, *job)) for job in todo]
                for fut in as_completed(futures):
                    emit(*fut.result())

    records = sorted((rec for recs in done.values() for rec in recs), key=lambda rec: rec.key)
    write_run_records(out, records)
    return records


def write_run_records(path, records: Iterable[RunRecord]) -> None:
    tmp = Path(f"{path}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUN_FIELDS)
        writer.writerows(rec.row() for rec in records)
    os.replace(tmp, path)


def read_run_records(path) -> list[RunRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [RunRecord.from_row(row) for row in csv.DictReader(fh)]


# --------------------------------------------------------------- benchmark

BENCH_FIELDS = ("p", "n", "d", "true_edges", "skeleton_edges", "scores", "step1_seconds", "step2_seconds")


@dataclass
class BenchRow:
    p: int
    n: int
    d: int
    true_edges: int
    skeleton_edges: int
    scores: int
    step1_seconds: float
    step2_seconds: float

    def row(self) -> list[str]:
        return [str(self.p), str(self.n), str(self.d), str(self.true_edges), str(self.skeleton_edges),
                str(self.scores), f"{self.step1_seconds:.6f}", f"{self.step2_seconds:.6f}"]


def _timed_run(data: Dataset, ci: CiConfig) -> tuple[float, float, Skeleton, int]:
    fresh = Dataset(data.values, data.columns)  # no cached column lists
    gc.collect()
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        t0 = time.perf_counter()
        skeleton = learn_skeleton(fresh, ci)
        t1 = time.perf_counter()
        _, trace = estimate_ordering(fresh, skeleton, ScoreConfig())
        t2 = time.perf_counter()
    finally:
        if gc_was_enabled:
            gc.enable()
    return t1 - t0, t2 - t1, skeleton, len(trace)


def cmd_bench(
    p_grid: Sequence[int],
    n_grid: Sequence[int],
    seed: int,
    out=None,
    d: int = 2,
    kind: str = "hybrid",
    repeats: int = 7,
    alpha: float = 0.05,
    max_conditioning: int = 2,
) -> list[BenchRow]:
    """Time step 1 (learned skeleton) and step 2 (ordering) over a (p, n) grid.

    For each p one model and one dataset of size max(n_grid) are drawn, and
    smaller n use its leading rows, so the n direction compares nested
    samples of a single model.  Repeats sweep the whole grid in turn, so a
    slow spell on the host hits every grid point alike, and each reported
    time is the minimum over ``repeats`` with the garbage collector paused.
    """
    if repeats < 1:
        raise SpecError("repeats must be >= 1")
    ci = CiConfig(alpha, max_conditioning)
    n_max = max(n_grid)
    points = []
    for p in sorted(set(p_grid)):
        dag, draw = generate_model(kind, p, d, n_max, derive_seed(seed, p))
        for n in sorted(set(n_grid)):
            points.append((p, n, dag, Dataset(draw.data.values[:n], draw.data.columns)))
    best = {(p, n): [math.inf, math.inf, None, 0] for p, n, _, _ in points}
    for _ in range(repeats):
        for p, n, _, data in points:
            t1, t2, skeleton, scores = _timed_run(data, ci)
            entry = best[p, n]
            entry[0], entry[1] = min(entry[0], t1), min(entry[1], t2)
            entry[2], entry[3] = skeleton, scores
    rows = [
        BenchRow(p, n, d, len(dag.edges), len(best[p, n][2].edges), best[p, n][3], best[p, n][0], best[p, n][1])
        for p, n, dag, _ in points
    ]
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(BENCH_FIELDS)
            writer.writerows(r.row() for r in rows)
    return rows


# ------------------------------------------------------------------ ingest


def cmd_ingest(path, drop_columns: Sequence[str], out) -> Dataset:
    data = ingest_real_csv(path, drop_columns)
    write_csv(out, data)
    return data

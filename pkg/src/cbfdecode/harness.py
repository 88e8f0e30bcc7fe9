"""Experiment sweeps: prefix selection, run grids, metrics, trajectories.

A sweep is the cross product of modes and gammas over a fixed prefix
list.  Every run writes a trace file with a deterministic name; metrics
and trajectory CSVs are derived from those traces, so all sweep output
is byte-reproducible unless wall-clock timing is switched on.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Optional

import numpy as np

from .core import Text
from .engine import (
    MODES,
    GenerationRequest,
    GenerationResult,
    TokenSelector,
    generate,
    read_trace,
    write_trace,
)
from .errors import NumericInputError, SpecFormatError, UnsafeStartError
from .filter import FilterConfig
from .lcf import LCF
from .multistep import MultiStepConfig
from .predictor import TokenPredictor

_METRICS_COLUMNS = (
    "mode", "gamma", "runs", "aborted_runs", "total_tokens",
    "mean_h_final", "std_h_final",
    "mean_disallowed", "std_disallowed",
    "mean_scans", "std_scans",
    "mean_ns_per_token", "std_ns_per_token",
)

_TRAJECTORY_COLUMNS = ("run_id", "mode", "gamma", "step", "h")


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one sweep.

    ``prefixes`` are token strings resolved against the predictor's
    vocabulary at run time, so a spec file is backend-agnostic.  With the
    ``shared`` seed policy every (mode, gamma) cell replays the same seed
    per (prefix, repeat) pair, which is what makes cross-cell comparisons
    paired; ``independent`` mixes the cell into the seed instead.
    """

    gammas: tuple[float, ...]
    prefixes: tuple[str, ...]
    modes: tuple[str, ...] = ("none", "cbf_single")
    repeats: int = 1
    max_new_tokens: int = 12
    seed: int = 0
    seed_policy: Literal["shared", "independent"] = "shared"
    selector: Literal["greedy", "multinomial"] = "multinomial"
    top_k: int = 8
    delta: float = 0.0
    horizon: int = 2
    sample_size: int = 4
    timing: Literal["none", "wall"] = "none"

    def __post_init__(self) -> None:
        if not self.gammas:
            raise SpecFormatError("spec needs at least one gamma")
        for g in self.gammas:
            if not (0.0 <= g <= 1.0):
                raise SpecFormatError(f"gamma {g} outside [0, 1]")
        if not self.prefixes:
            raise SpecFormatError("spec needs at least one prefix")
        if not self.modes:
            raise SpecFormatError("spec needs at least one mode")
        for m in self.modes:
            if m not in MODES:
                raise SpecFormatError(f"unknown mode {m!r}")
        if len(set(self.modes)) != len(self.modes):
            raise SpecFormatError("duplicate modes in spec")
        if self.repeats < 1:
            raise SpecFormatError(f"repeats must be >= 1, got {self.repeats}")
        if self.seed_policy not in ("shared", "independent"):
            raise SpecFormatError(f"unknown seed_policy {self.seed_policy!r}")
        if self.timing not in ("none", "wall"):
            raise SpecFormatError(f"unknown timing {self.timing!r}")


@dataclass(frozen=True)
class MetricsRow:
    """Aggregates for one (mode, gamma) cell."""

    mode: str
    gamma: float
    runs: int
    aborted_runs: int
    total_tokens: int
    mean_h_final: float
    std_h_final: float
    mean_disallowed: float
    std_disallowed: float
    mean_scans: float
    std_scans: float
    mean_ns_per_token: float
    std_ns_per_token: float

    def as_csv_fields(self) -> tuple[str, ...]:
        return (
            self.mode, repr(float(self.gamma)), str(self.runs),
            str(self.aborted_runs), str(self.total_tokens),
            repr(self.mean_h_final), repr(self.std_h_final),
            repr(self.mean_disallowed), repr(self.std_disallowed),
            repr(self.mean_scans), repr(self.std_scans),
            repr(self.mean_ns_per_token), repr(self.std_ns_per_token),
        )


@dataclass(frozen=True)
class PrefixSelection:
    """Outcome of prefix mining, including any shortage notice."""

    prefixes: tuple[Text, ...]
    requested: int
    attempts_used: int
    notice: Optional[str] = None


@dataclass(frozen=True)
class ExperimentResult:
    rows: tuple[MetricsRow, ...]
    metrics_path: Path
    trajectories_path: Path
    trace_paths: tuple[Path, ...]
    aborted_runs: int


def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def _run_seed(spec: ExperimentSpec, cell_index: int, prefix_index: int, repeat: int) -> int:
    entropy = [spec.seed, prefix_index, repeat]
    if spec.seed_policy == "independent":
        entropy.append(cell_index)
    ss = np.random.SeedSequence(entropy=entropy)
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def _cell_request(
    spec: ExperimentSpec, mode: str, gamma: float, initial: Text, seed: int
) -> GenerationRequest:
    sel = TokenSelector(kind=spec.selector, seed=seed)
    fil = mconf = None
    if mode == "cbf_single":
        fil = FilterConfig(gamma=gamma, delta=spec.delta, top_k=spec.top_k)
    elif mode in ("cbf_multistep", "best_of_k"):
        mconf = MultiStepConfig(
            horizon=spec.horizon, sample_size=spec.sample_size, gamma=gamma
        )
    return GenerationRequest(
        initial_text=initial, max_new_tokens=spec.max_new_tokens,
        mode=mode, filter=fil, multistep=mconf, selector=sel,
    )


def run_experiment(
    spec: ExperimentSpec, g: TokenPredictor, h: LCF, out_dir: str | Path
) -> ExperimentResult:
    """Execute the full sweep and write traces plus both CSVs.

    A run that aborts (or refuses an unsafe start) still produces a trace
    file and is counted in ``aborted_runs``; its completed steps feed the
    per-step statistics, while final-h statistics cover completed runs
    only.
    """
    out = Path(out_dir)
    traces_dir = out / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)
    initials = [Text.from_ids(g.vocab, g.vocab.tokenize(p)) for p in spec.prefixes]
    cells = [
        (mode, gamma)
        for mode in sorted(spec.modes)
        for gamma in sorted(spec.gammas)
    ]
    rows: list[MetricsRow] = []
    trace_paths: list[Path] = []
    total_aborted = 0
    for cell_index, (mode, gamma) in enumerate(cells):
        h_finals: list[float] = []
        disallowed: list[float] = []
        scans: list[float] = []
        ns_per_token: list[float] = []
        tokens_total = 0
        aborted = 0
        runs = 0
        for pi, initial in enumerate(initials):
            for rep in range(spec.repeats):
                runs += 1
                seed = _run_seed(spec, cell_index, pi, rep)
                req = _cell_request(spec, mode, gamma, initial, seed)
                try:
                    result = generate(req, g, h, timing=spec.timing)
                except UnsafeStartError as err:
                    result = GenerationResult(
                        request=req, text=initial, entries=(),
                        aborted=True, abort_reason=f"unsafe_start: {err}",
                    )
                path = traces_dir / (
                    f"{mode}_g{repr(float(gamma))}_p{pi}_r{rep}.jsonl"
                )
                write_trace(result, str(path))
                trace_paths.append(path)
                run_tokens = 0
                run_ns = 0
                last_h: Optional[float] = None
                for e in result.entries:
                    if e.h_value is None:
                        continue
                    disallowed.append(float(e.disallowed_count))
                    scans.append(float(e.scans_or_attempts))
                    run_tokens += len(e.token_or_block)
                    run_ns += e.elapsed_ns
                    last_h = e.h_value
                tokens_total += run_tokens
                if result.aborted:
                    aborted += 1
                elif last_h is not None:
                    h_finals.append(last_h)
                if run_tokens > 0:
                    ns_per_token.append(run_ns / run_tokens)
        total_aborted += aborted
        mh, sh = _mean_std(h_finals)
        md, sd = _mean_std(disallowed)
        ms, ss = _mean_std(scans)
        mt, st = _mean_std(ns_per_token)
        rows.append(MetricsRow(
            mode=mode, gamma=gamma, runs=runs, aborted_runs=aborted,
            total_tokens=tokens_total,
            mean_h_final=mh, std_h_final=sh,
            mean_disallowed=md, std_disallowed=sd,
            mean_scans=ms, std_scans=ss,
            mean_ns_per_token=mt, std_ns_per_token=st,
        ))
    metrics_path = out / "metrics.csv"
    _write_csv(metrics_path, _METRICS_COLUMNS,
               [r.as_csv_fields() for r in rows])
    trajectories_path = out / "trajectories.csv"
    emit_trajectory_data(trace_paths, trajectories_path)
    return ExperimentResult(
        rows=tuple(rows), metrics_path=metrics_path,
        trajectories_path=trajectories_path,
        trace_paths=tuple(trace_paths), aborted_runs=total_aborted,
    )


def emit_trajectory_data(trace_paths: Iterable[str | Path], out_csv: str | Path) -> int:
    """Flatten traces into per-step h rows for plotting.

    Each run contributes a step-0 row holding the pre-generation value,
    then one row per completed step at its cumulative token count.  A
    trace with no completed steps contributes nothing.  Returns the
    number of data rows written.
    """
    rows: list[tuple[str, ...]] = []
    for path in trace_paths:
        record = read_trace(str(path))
        run_id = Path(path).stem
        mode = str(record.header.get("mode"))
        gamma = record.header.get("gamma")
        gamma_s = "" if gamma is None else repr(float(gamma))
        steps = [e for e in record.entries if e.h_value is not None]
        if not steps:
            continue
        rows.append((run_id, mode, gamma_s, "0", repr(steps[0].base_h)))
        count = 0
        for e in steps:
            count += len(e.token_or_block)
            rows.append((run_id, mode, gamma_s, str(count), repr(e.h_value)))
    _write_csv(out_csv, _TRAJECTORY_COLUMNS, rows)
    return len(rows)


def _write_csv(path: str | Path, columns: tuple[str, ...],
               rows: list[tuple[str, ...]]) -> None:
    lines = [",".join(columns)]
    lines.extend(",".join(row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def select_prefixes(
    g: TokenPredictor,
    h: LCF,
    count: int,
    min_tokens: int = 10,
    probe_tokens: int = 10,
    probes: int = 3,
    max_attempts: int = 200,
    seed: int = 0,
) -> PrefixSelection:
    """Mine prefixes that are safe now but can drift unsafe.

    A candidate qualifies when it is longer than ``min_tokens``, scores
    h >= 0, and at least one of ``probes`` unconstrained continuations
    ends below zero, so constrained decoding on it has something to
    prevent.  Mining stops after ``max_attempts`` candidates; a shortage
    is reported in the notice rather than raised.
    """
    if count < 1:
        raise NumericInputError(f"count must be >= 1, got {count}")
    vocab = g.vocab
    empty = Text.from_ids(vocab, ())
    found: list[Text] = []
    seen: set[tuple[int, ...]] = set()
    attempts = 0
    for attempt in range(max_attempts):
        if len(found) >= count:
            break
        attempts += 1
        length = min_tokens + 1 + (attempt % 4)
        req = GenerationRequest(
            initial_text=empty, max_new_tokens=length, mode="none",
            selector=TokenSelector(kind="multinomial",
                                   seed=_mine_seed(seed, attempt, 0)),
        )
        candidate = generate(req, g, h).text
        if len(candidate) <= min_tokens or candidate.ids in seen:
            continue
        if h.evaluate(candidate) < 0.0:
            continue
        drifts = False
        for probe in range(probes):
            preq = GenerationRequest(
                initial_text=candidate, max_new_tokens=probe_tokens, mode="none",
                selector=TokenSelector(kind="multinomial",
                                       seed=_mine_seed(seed, attempt, probe + 1)),
            )
            if h.evaluate(generate(preq, g, h).text) < 0.0:
                drifts = True
                break
        if drifts:
            seen.add(candidate.ids)
            found.append(candidate)
    notice = None
    if len(found) < count:
        notice = (
            f"found {len(found)} of {count} requested prefixes "
            f"in {attempts} attempts"
        )
    return PrefixSelection(
        prefixes=tuple(found), requested=count,
        attempts_used=attempts, notice=notice,
    )


def _mine_seed(base: int, attempt: int, stream: int) -> int:
    ss = np.random.SeedSequence(entropy=[base, attempt, stream])
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


_SPEC_PARSERS = {
    "gammas": lambda v: tuple(float(p) for p in v.split(",") if p.strip() != ""),
    "modes": lambda v: tuple(p.strip() for p in v.split(",") if p.strip()),
    "repeats": int,
    "max_new_tokens": int,
    "seed": int,
    "seed_policy": str,
    "selector": str,
    "top_k": int,
    "delta": float,
    "horizon": int,
    "sample_size": int,
    "timing": str,
}


def parse_spec(path: str | Path) -> ExperimentSpec:
    """Read a ``key = value`` sweep description.

    Blank lines and ``#`` comments are skipped.  The ``prefix`` key may
    repeat, one prefix string per line; every other key may appear once.
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise SpecFormatError(f"cannot read spec {path}: {exc}") from exc
    prefixes: list[str] = []
    values: dict = {}
    for no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SpecFormatError(f"{path}:{no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "prefix":
            if not value:
                raise SpecFormatError(f"{path}:{no}: empty prefix")
            prefixes.append(value)
            continue
        if key not in _SPEC_PARSERS:
            raise SpecFormatError(f"{path}:{no}: unknown key {key!r}")
        if key in values:
            raise SpecFormatError(f"{path}:{no}: duplicate key {key!r}")
        try:
            values[key] = _SPEC_PARSERS[key](value)
        except ValueError as exc:
            raise SpecFormatError(f"{path}:{no}: bad value for {key}: {value!r}") from exc
    if not prefixes:
        raise SpecFormatError(f"{path}: spec declares no prefix lines")
    try:
        return ExperimentSpec(prefixes=tuple(prefixes), **values)
    except TypeError as exc:
        raise SpecFormatError(f"{path}: {exc}") from exc

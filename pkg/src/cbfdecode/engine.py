"""Generation loop: predict, filter, select, append, trace.

Four modes share one loop skeleton:

* ``none``          unconstrained sampling from the raw predictor
* ``cbf_single``    per-token filtering (strict, or relaxed when delta > 0)
* ``cbf_multistep`` H-token block rejection sampling
* ``best_of_k``     unconstrained K-block baseline, best endpoint wins

Every emitted token or block produces one trace entry; an infeasible
step aborts the run, leaving the partial text plus an abort marker in
the trace rather than raising out of ``generate``.  Starting a
constrained mode from unsafe text is the caller's mistake and does
raise.

All timing is opt-in: the default clock reports zero so that traces are
byte-identical across runs and machines.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .core import Text, TokenDistribution, TokenId, concat
from .errors import (
    InfeasibleConstraintError,
    InfeasibleHorizonError,
    NumericInputError,
    TraceFormatError,
    UnsafeStartError,
)
from .filter import FilterConfig, filter_relaxed, filter_topk
from .lcf import LCF, CachedLCF
from .multistep import (
    MultiStepConfig,
    blockwise_best_of_k_step,
    extend,
    multistep_step,
)
from .predictor import TokenPredictor
from .sampling import MULTISTEP_STREAM, SELECTOR_STREAM, derived_rng, draw_index

Mode = Literal["none", "cbf_single", "cbf_multistep", "best_of_k"]
MODES: tuple[str, ...] = ("none", "cbf_single", "cbf_multistep", "best_of_k")

#: Constrained modes that refuse to start outside the safe set.
_GUARDED_MODES = ("cbf_single", "cbf_multistep")

_ENTRY_KEYS = (
    "step",
    "token_or_block",
    "h_value",
    "base_h",
    "disallowed_count",
    "scans_or_attempts",
    "elapsed_ns",
    "truncated",
)


@dataclass(frozen=True)
class TokenSelector:
    """How to pick a token from a filtered distribution.

    ``greedy`` takes the highest-probability token, lowest id on ties;
    ``multinomial`` samples by inverse CDF over ascending ids.  The seed
    is the master seed for the whole run.
    """

    kind: Literal["greedy", "multinomial"] = "multinomial"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("greedy", "multinomial"):
            raise NumericInputError(f"unknown selector kind {self.kind!r}")
        if self.seed < 0:
            raise NumericInputError(f"seed must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class GenerationRequest:
    """Everything a run needs besides the predictor and the constraint."""

    initial_text: Text
    max_new_tokens: int
    mode: Mode = "cbf_single"
    filter: Optional[FilterConfig] = None
    multistep: Optional[MultiStepConfig] = None
    selector: TokenSelector = field(default_factory=TokenSelector)

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise NumericInputError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")
        if self.mode not in MODES:
            raise NumericInputError(f"unknown mode {self.mode!r}")
        if self.mode == "cbf_single" and self.filter is None:
            raise NumericInputError("cbf_single mode needs a FilterConfig")
        if self.mode in ("cbf_multistep", "best_of_k") and self.multistep is None:
            raise NumericInputError(f"{self.mode} mode needs a MultiStepConfig")

    @property
    def gamma(self) -> Optional[float]:
        """Decay rate actually enforced by this request, if any."""
        if self.mode == "cbf_single":
            return self.filter.gamma
        if self.mode == "cbf_multistep":
            return self.multistep.gamma
        return None


@dataclass(frozen=True)
class TraceEntry:
    """One generation step.

    ``token_or_block`` holds one id for single-token modes, ``horizon``
    ids for block modes, and is empty on the abort marker entry (whose
    ``h_value`` is ``None``).  ``disallowed_count`` doubles as the
    rejection count in block modes; ``scans_or_attempts`` is the number
    of admissibility checks or sampling attempts behind the step.
    """

    step: int
    token_or_block: tuple[TokenId, ...]
    h_value: Optional[float]
    base_h: float
    disallowed_count: int
    scans_or_attempts: int
    elapsed_ns: int
    truncated: bool


@dataclass(frozen=True)
class GenerationResult:
    """Final text plus the step-by-step trace of how it was produced."""

    request: GenerationRequest
    text: Text
    entries: tuple[TraceEntry, ...]
    aborted: bool = False
    abort_reason: Optional[str] = None

    @property
    def new_token_count(self) -> int:
        return len(self.text) - len(self.request.initial_text)


def select_token(
    sel: TokenSelector,
    q: TokenDistribution,
    rng: Optional[np.random.Generator] = None,
) -> TokenId:
    """Pick one token id from ``q`` according to the selector policy."""
    if sel.kind == "greedy":
        return int(np.argmax(q.probs)) + 1
    if rng is None:
        raise NumericInputError("multinomial selection needs a random stream")
    return draw_index(q.probs, rng.random()) + 1


def generate(
    req: GenerationRequest,
    g: TokenPredictor,
    h: LCF,
    timing: Literal["none", "wall"] = "none",
) -> GenerationResult:
    """Run one generation request to completion or abort.

    The constraint is wrapped in a fresh per-run cache so repeated
    evaluations of the same prefix (the base value, the kept candidate)
    cost one real evaluation.  Random draws come from two streams
    derived from the selector seed, one for token selection and one for
    block sampling, so single-token and block modes never share state.
    """
    if timing not in ("none", "wall"):
        raise NumericInputError(f"unknown timing mode {timing!r}")
    clock = time.perf_counter_ns if timing == "wall" else None
    hc = CachedLCF(h)
    x = req.initial_text
    base0 = hc.evaluate(x)
    if req.mode in _GUARDED_MODES and base0 < 0.0:
        raise UnsafeStartError(base0)
    rng_select = derived_rng(req.selector.seed, SELECTOR_STREAM)
    rng_blocks = derived_rng(req.selector.seed, MULTISTEP_STREAM)
    eos = x.vocab.eos_id
    entries: list[TraceEntry] = []
    aborted = False
    reason: Optional[str] = None
    added = 0

    if req.mode in ("none", "cbf_single"):
        while added < req.max_new_tokens:
            t0 = clock() if clock else 0
            base = hc.evaluate(x)
            if req.mode == "none":
                q = g.predict(x)
                disallowed, scans, truncated = 0, 0, False
            else:
                try:
                    q, disallowed, scans, truncated = _filtered(g, x, hc, req.filter)
                except InfeasibleConstraintError as err:
                    entries.append(TraceEntry(
                        step=added, token_or_block=(), h_value=None, base_h=base,
                        disallowed_count=err.scans, scans_or_attempts=err.scans,
                        elapsed_ns=(clock() - t0) if clock else 0, truncated=False,
                    ))
                    aborted, reason = True, f"infeasible_constraint: {err}"
                    break
            t = select_token(req.selector, q, rng_select)
            x = concat(x, t)
            h_val = hc.evaluate(x)
            entries.append(TraceEntry(
                step=added, token_or_block=(t,), h_value=h_val, base_h=base,
                disallowed_count=disallowed, scans_or_attempts=scans,
                elapsed_ns=(clock() - t0) if clock else 0, truncated=truncated,
            ))
            added += 1
            if eos is not None and t == eos:
                break
    else:
        cfg = req.multistep
        while added + cfg.horizon <= req.max_new_tokens:
            t0 = clock() if clock else 0
            base = hc.evaluate(x)
            try:
                if req.mode == "cbf_multistep":
                    block, stats = multistep_step(g, x, hc, cfg, rng_blocks)
                    disallowed = stats.rejections
                else:
                    block, stats = blockwise_best_of_k_step(
                        g, x, hc, cfg.horizon, cfg.sample_size, rng_blocks
                    )
                    disallowed = 0
            except InfeasibleHorizonError as err:
                entries.append(TraceEntry(
                    step=added, token_or_block=(), h_value=None, base_h=base,
                    disallowed_count=err.attempts - len(err.candidates),
                    scans_or_attempts=err.attempts,
                    elapsed_ns=(clock() - t0) if clock else 0, truncated=False,
                ))
                aborted, reason = True, f"infeasible_horizon: {err}"
                break
            x = extend(x, block.tokens)
            entries.append(TraceEntry(
                step=added, token_or_block=block.tokens, h_value=block.h_end,
                base_h=base, disallowed_count=disallowed,
                scans_or_attempts=stats.attempts,
                elapsed_ns=(clock() - t0) if clock else 0, truncated=False,
            ))
            added += cfg.horizon
            if eos is not None and eos in block.tokens:
                break

    return GenerationResult(
        request=req, text=x, entries=tuple(entries),
        aborted=aborted, abort_reason=reason,
    )


def _filtered(
    g: TokenPredictor, x: Text, h: LCF, cfg: FilterConfig
) -> tuple[TokenDistribution, int, int, bool]:
    """Apply the configured per-token filter; relaxed when delta > 0."""
    if cfg.delta > 0.0:
        res = filter_relaxed(g.predict(x), x, h, cfg.gamma, cfg.delta)
    else:
        res = filter_topk(g, x, h, cfg)
    return res.q, res.disallowed_count, res.scans, res.truncated


def _header(result: GenerationResult) -> dict:
    req = result.request
    f, m = req.filter, req.multistep
    echo = {
        "initial_ids": list(req.initial_text.ids),
        "max_new_tokens": req.max_new_tokens,
        "mode": req.mode,
        "gamma": req.gamma,
        "delta": f.delta if f else None,
        "top_k": f.top_k if f else None,
        "scan_cap": f.scan_cap if f else None,
        "horizon": m.horizon if m else None,
        "sample_size": m.sample_size if m else None,
        "max_attempts": m.max_attempts if m else None,
        "selector": req.selector.kind,
        "seed": req.selector.seed,
    }
    return {
        "request": echo,
        "vocab_id": result.text.vocab.fingerprint(),
        "mode": req.mode,
        "gamma": req.gamma,
        "seed": req.selector.seed,
    }


def _dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_trace(result: GenerationResult, path: str) -> None:
    """Write one run as JSON lines: header, entries, optional abort mark.

    Compact separators, insertion-ordered keys, and ``repr``-based float
    formatting make the bytes a pure function of the run.
    """
    lines = [_dumps(_header(result))]
    for e in result.entries:
        lines.append(_dumps({
            "step": e.step,
            "token_or_block": list(e.token_or_block),
            "h_value": e.h_value,
            "base_h": e.base_h,
            "disallowed_count": e.disallowed_count,
            "scans_or_attempts": e.scans_or_attempts,
            "elapsed_ns": e.elapsed_ns,
            "truncated": e.truncated,
        }))
    if result.aborted:
        lines.append(_dumps({"abort": result.abort_reason}))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class TraceRecord:
    """Parsed trace file: header dict, entries, and any abort reason."""

    header: dict
    entries: tuple[TraceEntry, ...]
    abort_reason: Optional[str] = None

    @property
    def aborted(self) -> bool:
        return self.abort_reason is not None


def read_trace(path: str) -> TraceRecord:
    """Parse a trace file, validating shape line by line."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    if not raw:
        raise TraceFormatError(str(path), 1, "empty trace file")
    header = _parse_line(path, 1, raw[0])
    if "request" not in header:
        raise TraceFormatError(str(path), 1, "first line is not a trace header")
    entries: list[TraceEntry] = []
    abort_reason: Optional[str] = None
    for i, line in enumerate(raw[1:], start=2):
        if not line.strip():
            continue
        obj = _parse_line(path, i, line)
        if set(obj.keys()) == {"abort"}:
            if abort_reason is not None:
                raise TraceFormatError(str(path), i, "duplicate abort marker")
            abort_reason = str(obj["abort"])
            continue
        if abort_reason is not None:
            raise TraceFormatError(str(path), i, "entry after abort marker")
        missing = [k for k in _ENTRY_KEYS if k not in obj]
        if missing:
            raise TraceFormatError(str(path), i, f"entry missing keys {missing}")
        try:
            entries.append(TraceEntry(
                step=int(obj["step"]),
                token_or_block=tuple(int(t) for t in obj["token_or_block"]),
                h_value=None if obj["h_value"] is None else float(obj["h_value"]),
                base_h=float(obj["base_h"]),
                disallowed_count=int(obj["disallowed_count"]),
                scans_or_attempts=int(obj["scans_or_attempts"]),
                elapsed_ns=int(obj["elapsed_ns"]),
                truncated=bool(obj["truncated"]),
            ))
        except (TypeError, ValueError) as err:
            raise TraceFormatError(str(path), i, f"bad entry field: {err}") from err
    return TraceRecord(header=header, entries=tuple(entries), abort_reason=abort_reason)


def _parse_line(path: str, line_no: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as err:
        raise TraceFormatError(str(path), line_no, f"invalid JSON: {err.msg}") from err
    if not isinstance(obj, dict):
        raise TraceFormatError(str(path), line_no, "line is not a JSON object")
    return obj

"""Tiny fixed-weight next-token model.

The committed JSON weight file holds an embedding table and two dense
layers; inference is plain float64 numpy, so identical requests produce
identical probabilities on any machine.  Token strings carry their own
spacing and rendered text is their plain concatenation, which the
greedy longest-match tokenizer inverts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

MODEL_FORMAT = "model-server-stub"
MODEL_VERSION = 1

#: tokens of context folded into the next-token state
CONTEXT_WINDOW = 4


class ModelFileError(Exception):
    """A weight file that does not parse or validate."""


def greedy_tokenize(text: str, tokens: tuple[str, ...]) -> tuple[int, ...]:
    """Longest-match tokenization over ``tokens``; ids are one-based.

    Raises ValueError when no token matches at some offset.
    """
    by_length = sorted(range(len(tokens)), key=lambda i: -len(tokens[i]))
    ids: list[int] = []
    pos = 0
    while pos < len(text):
        for i in by_length:
            t = tokens[i]
            if t and text.startswith(t, pos):
                ids.append(i + 1)
                pos += len(t)
                break
        else:
            raise ValueError(
                f"cannot tokenize text at offset {pos}: {text[pos:pos + 12]!r}"
            )
    return tuple(ids)


@dataclass(frozen=True)
class StubModel:
    model_id: str
    tokens: tuple[str, ...]
    eos_id: Optional[int]
    embed: np.ndarray
    mix: np.ndarray
    out: np.ndarray
    bias: np.ndarray

    @property
    def vocab_size(self) -> int:
        return len(self.tokens)

    def tokenize(self, text: str) -> tuple[int, ...]:
        return greedy_tokenize(text, self.tokens)

    def logits(self, ids: tuple[int, ...]) -> np.ndarray:
        ctx = ids[-CONTEXT_WINDOW:]
        if ctx:
            v = self.embed[[i - 1 for i in ctx], :].mean(axis=0)
        else:
            v = np.zeros(self.embed.shape[1])
        state = np.tanh(self.mix @ v)
        return self.out @ state + self.bias

    def probabilities(self, text: str, temperature: float) -> np.ndarray:
        """Temperature-softmaxed next-token distribution for ``text``."""
        z = self.logits(self.tokenize(text)) / float(temperature)
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()


def _matrix(raw: object, rows: int, cols: int, name: str) -> np.ndarray:
    arr = np.asarray(raw, dtype=np.float64)
    if arr.shape != (rows, cols):
        raise ModelFileError(f"{name} has shape {arr.shape}, want ({rows}, {cols})")
    if not np.isfinite(arr).all():
        raise ModelFileError(f"{name} contains non-finite values")
    return arr


def load_model(path: str | Path) -> StubModel:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ModelFileError(f"cannot read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or raw.get("format") != MODEL_FORMAT:
        raise ModelFileError(f"model {path} has wrong format marker")
    if raw.get("version") != MODEL_VERSION:
        raise ModelFileError(f"model {path} has unsupported version {raw.get('version')!r}")
    try:
        tokens = tuple(str(t) for t in raw["tokens"])
        if not tokens or len(set(tokens)) != len(tokens) or "" in tokens:
            raise ModelFileError(f"model {path} has a bad token list")
        v = len(tokens)
        dim = int(raw["dim"])
        eos = raw.get("eos_id")
        model = StubModel(
            model_id=str(raw["model_id"]),
            tokens=tokens,
            eos_id=None if eos is None else int(eos),
            embed=_matrix(raw["embed"], v, dim, "embed"),
            mix=_matrix(raw["mix"], dim, dim, "mix"),
            out=_matrix(raw["out"], v, dim, "out"),
            bias=_matrix([raw["bias"]], 1, v, "bias")[0],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"model {path} is malformed: {exc}") from exc
    if model.eos_id is not None and not (1 <= model.eos_id <= v):
        raise ModelFileError(f"model {path} eos_id {model.eos_id} out of range")
    return model


def default_model_path() -> Path:
    return Path(resources.files("model_server").joinpath("data/stub_model.json"))

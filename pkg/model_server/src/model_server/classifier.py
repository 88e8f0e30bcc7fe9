"""Fixed-weight 3-class sentiment scorer.

Scores come from a softmax over [-s*m, b, s*m] where m is the mean
committed valence of the text's tokens, s a sharpness and b a neutral
bias.  Crude, but deterministic and monotone in m, which is all the
protocol needs from a stand-in classifier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .stubmodel import ModelFileError, greedy_tokenize

CLASSIFIER_FORMAT = "model-server-stub-classifier"
CLASSIFIER_VERSION = 1


@dataclass(frozen=True)
class StubClassifier:
    classifier_id: str
    tokens: tuple[str, ...]
    valence: np.ndarray
    sharpness: float
    neutral_bias: float

    def score(self, text: str) -> tuple[float, float, float]:
        """(s_neg, s_neu, s_pos), summing to 1."""
        ids = greedy_tokenize(text, self.tokens)
        if ids:
            m = float(np.mean([self.valence[i - 1] for i in ids]))
        else:
            m = 0.0
        z = np.array([-self.sharpness * m, self.neutral_bias, self.sharpness * m])
        z = z - z.max()
        e = np.exp(z)
        p = e / e.sum()
        return float(p[0]), float(p[1]), float(p[2])


def load_classifier(path: str | Path) -> StubClassifier:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ModelFileError(f"cannot read classifier {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"classifier {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or raw.get("format") != CLASSIFIER_FORMAT:
        raise ModelFileError(f"classifier {path} has wrong format marker")
    if raw.get("version") != CLASSIFIER_VERSION:
        raise ModelFileError(
            f"classifier {path} has unsupported version {raw.get('version')!r}"
        )
    try:
        tokens = tuple(str(t) for t in raw["tokens"])
        valence = np.asarray(raw["valence"], dtype=np.float64)
        clf = StubClassifier(
            classifier_id=str(raw["classifier_id"]),
            tokens=tokens,
            valence=valence,
            sharpness=float(raw["sharpness"]),
            neutral_bias=float(raw["neutral_bias"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"classifier {path} is malformed: {exc}") from exc
    if not tokens or valence.shape != (len(tokens),):
        raise ModelFileError(f"classifier {path} valence does not match tokens")
    if not np.isfinite(valence).all() or not np.isfinite([clf.sharpness, clf.neutral_bias]).all():
        raise ModelFileError(f"classifier {path} contains non-finite values")
    return clf


def default_classifier_path() -> Path:
    return Path(resources.files("model_server").joinpath("data/stub_classifier.json"))

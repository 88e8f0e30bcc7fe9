"""Generate the committed stub weight files.

Run once from the package root; the outputs are committed so inference
is reproducible without this script.  Weights are rounded to 6 decimals
to keep the JSON small; the rounded values are the weights.
"""

import json
from pathlib import Path

import numpy as np

TOKENS = ["good", " good", " bad", " fun", " sad", " day",
          " it", " was", " very", " not", " the", "."]
VALENCE = [1.0, 1.0, -1.0, 0.8, -0.8, 0.1,
           0.0, 0.0, 0.0, -0.3, 0.0, 0.0]
DIM = 8


def rounded(arr):
    return [[round(float(x), 6) for x in row] for row in arr]


def main() -> None:
    rng = np.random.default_rng(7)
    v = len(TOKENS)
    model = {
        "format": "model-server-stub",
        "version": 1,
        "model_id": "stub-causal-12",
        "tokens": TOKENS,
        "eos_id": None,
        "dim": DIM,
        "embed": rounded(rng.normal(0.0, 0.6, (v, DIM))),
        "mix": rounded(rng.normal(0.0, 0.5, (DIM, DIM))),
        "out": rounded(rng.normal(0.0, 0.7, (v, DIM))),
        "bias": [round(float(x), 6) for x in rng.normal(0.0, 0.3, v)],
    }
    classifier = {
        "format": "model-server-stub-classifier",
        "version": 1,
        "classifier_id": "stub-sentiment-3",
        "tokens": TOKENS,
        "valence": VALENCE,
        "sharpness": 1.5,
        "neutral_bias": 0.2,
    }
    data = Path(__file__).resolve().parent.parent / "src" / "model_server" / "data"
    data.mkdir(parents=True, exist_ok=True)
    (data / "stub_model.json").write_text(
        json.dumps(model, indent=1) + "\n", encoding="utf-8")
    (data / "stub_classifier.json").write_text(
        json.dumps(classifier, indent=1) + "\n", encoding="utf-8")
    print("wrote", data / "stub_model.json")
    print("wrote", data / "stub_classifier.json")


if __name__ == "__main__":
    main()

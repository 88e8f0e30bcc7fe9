"""Command line front end.

Subcommands: ``generate``, ``sweep``, ``train-ngram``,
``select-prefixes``, ``probe-server``.  Exit codes: 0 success, 2 the
constraint became infeasible (including an unsafe starting text),
3 backend unavailable, 4 malformed spec, model, or arguments.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .core import Text, Vocabulary
from .engine import (
    MODES,
    GenerationRequest,
    TokenSelector,
    generate,
    write_trace,
)
from .errors import (
    BackendUnavailableError,
    CbfDecodeError,
    InvalidTokenError,
    NumericInputError,
    ProtocolError,
    SpecFormatError,
    TrainingInputError,
    UnsafeStartError,
)
from .filter import FilterConfig
from .harness import parse_spec, run_experiment, select_prefixes
from .lcf import LCF, ConstantLCF, LexiconLCF, load_lexicon
from .multistep import MultiStepConfig
from .predictor import NGramModel, TokenPredictor, UniformPredictor, train_ngram
from .remote import RemoteBackend, RemotePredictor, remote_score_lcf
from .toys import adversarial_predictor, toy_lexicon_lcf, toy_ngram, toy_vocabulary


def _parse_endpoint(spec: str) -> tuple[str, int]:
    host, sep, port = spec.rpartition(":")
    if not sep or not host:
        raise SpecFormatError(f"expected HOST:PORT, got {spec!r}")
    try:
        return host, int(port)
    except ValueError:
        raise SpecFormatError(f"bad port in {spec!r}") from None


class _Backends:
    """Resolves --backend / --lcf values, sharing remote connections."""

    def __init__(self, temperature: float = 1.0):
        self.temperature = temperature
        self._remotes: dict[tuple[str, int], RemoteBackend] = {}

    def remote(self, spec: str) -> RemoteBackend:
        endpoint = _parse_endpoint(spec.removeprefix("remote:"))
        if endpoint not in self._remotes:
            backend = RemoteBackend(*endpoint, temperature=self.temperature)
            backend.connect()
            self._remotes[endpoint] = backend
        return self._remotes[endpoint]

    def predictor(self, spec: str) -> TokenPredictor:
        if spec == "toy":
            return toy_ngram()
        if spec == "adversarial":
            return adversarial_predictor()
        if spec == "uniform":
            return UniformPredictor(toy_vocabulary())
        if spec.startswith("remote:"):
            return RemotePredictor(self.remote(spec))
        if Path(spec).exists():
            return NGramModel.load(spec)
        raise SpecFormatError(f"unknown backend {spec!r}")

    def lcf(self, spec: str) -> LCF:
        if spec == "toy":
            return toy_lexicon_lcf()
        if spec.startswith("constant:"):
            try:
                return ConstantLCF(float(spec.removeprefix("constant:")))
            except ValueError:
                raise SpecFormatError(f"bad constant value in {spec!r}") from None
        if spec.startswith("remote:"):
            return remote_score_lcf(self.remote(spec))
        if Path(spec).exists():
            return LexiconLCF(load_lexicon(spec), window="all", normalizer=4.0)
        raise SpecFormatError(f"unknown lcf {spec!r}")

    def close(self) -> None:
        for backend in self._remotes.values():
            backend.close()


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", default="toy",
                   help="toy | adversarial | uniform | remote:HOST:PORT | model.json path")
    p.add_argument("--lcf", default="toy",
                   help="toy | constant:V | remote:HOST:PORT | lexicon.tsv path")
    p.add_argument("--temperature", type=float, default=1.0,
                   help="temperature pinned with a remote backend")


def _add_request_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", default="cbf_single", choices=MODES)
    p.add_argument("--gamma", type=float, default=0.4)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--top-k", type=int, default=30)
    p.add_argument("--horizon", type=int, default=2)
    p.add_argument("--sample-size", type=int, default=4)
    p.add_argument("--max-new-tokens", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--selector", default="multinomial", choices=("greedy", "multinomial"))
    p.add_argument("--timing", default="none", choices=("none", "wall"))


def _request_from_args(args, initial: Text) -> GenerationRequest:
    fil = mconf = None
    if args.mode == "cbf_single":
        fil = FilterConfig(gamma=args.gamma, delta=args.delta, top_k=args.top_k)
    elif args.mode in ("cbf_multistep", "best_of_k"):
        mconf = MultiStepConfig(horizon=args.horizon, sample_size=args.sample_size,
                                gamma=args.gamma)
    return GenerationRequest(
        initial_text=initial, max_new_tokens=args.max_new_tokens, mode=args.mode,
        filter=fil, multistep=mconf,
        selector=TokenSelector(kind=args.selector, seed=args.seed),
    )


def _cmd_generate(args) -> int:
    backends = _Backends(temperature=args.temperature)
    try:
        g = backends.predictor(args.backend)
        h = backends.lcf(args.lcf)
        vocab = g.vocab
        initial = Text.from_ids(vocab, vocab.tokenize(args.prompt))
        req = _request_from_args(args, initial)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        try:
            result = generate(req, g, h, timing=args.timing)
        except UnsafeStartError as err:
            print(f"error: {err}", file=sys.stderr)
            return 2
        write_trace(result, str(out_dir / "trace.jsonl"))
        print(result.text.rendered)
        if result.aborted:
            print(f"aborted: {result.abort_reason}", file=sys.stderr)
            return 2
        return 0
    finally:
        backends.close()


def _cmd_sweep(args) -> int:
    spec = parse_spec(args.spec)
    backends = _Backends(temperature=args.temperature)
    try:
        g = backends.predictor(args.backend)
        h = backends.lcf(args.lcf)
        result = run_experiment(spec, g, h, args.out_dir)
        print(f"rows={len(result.rows)} aborted_runs={result.aborted_runs} "
              f"metrics={result.metrics_path} trajectories={result.trajectories_path}")
        return 0
    finally:
        backends.close()


def _cmd_train_ngram(args) -> int:
    try:
        lines = Path(args.corpus).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise SpecFormatError(f"cannot read corpus {args.corpus}: {exc}") from exc
    sentences = [line.split() for line in lines if line.strip()]
    if not sentences:
        raise TrainingInputError(f"corpus {args.corpus} has no sentences")
    tokens = tuple(sorted({tok for sent in sentences for tok in sent}))
    vocab = Vocabulary(tokens=tokens, separator=" ", eos_id=None,
                       name=Path(args.corpus).stem)
    texts = [
        Text.from_ids(vocab, tuple(vocab.id_of(tok) for tok in sent))
        for sent in sentences
    ]
    model = train_ngram(texts, order=args.order, alpha=args.alpha, vocab=vocab)
    model.save(args.out)
    print(f"trained order-{args.order} model on {len(texts)} sentences, "
          f"vocab {vocab.size}, saved to {args.out}")
    return 0


def _cmd_select_prefixes(args) -> int:
    backends = _Backends(temperature=args.temperature)
    try:
        g = backends.predictor(args.backend)
        h = backends.lcf(args.lcf)
        sel = select_prefixes(
            g, h, count=args.count, min_tokens=args.min_tokens,
            probe_tokens=args.probe_tokens, probes=args.probes,
            max_attempts=args.max_attempts, seed=args.seed,
        )
        for prefix in sel.prefixes:
            print(prefix.rendered)
        if sel.notice:
            print(f"notice: {sel.notice}", file=sys.stderr)
        return 0
    finally:
        backends.close()


def _cmd_probe_server(args) -> int:
    host, port = _parse_endpoint(args.endpoint)
    backend = RemoteBackend(host, port, temperature=args.temperature)
    try:
        hs = backend.connect()
        print(f"model_id={hs.model_id}")
        print(f"vocab_size={hs.vocab_size}")
        print(f"temperature={hs.temperature!r}")
        print(f"predict_topm={str(hs.supports_predict_topm).lower()} "
              f"score={str(hs.supports_score).lower()}")
        return 0
    finally:
        backend.close()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbfdecode",
        description="Constrained decoding with a barrier-style token filter.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="run one generation request")
    p.add_argument("prompt", help="starting text (may be empty)")
    _add_model_flags(p)
    _add_request_flags(p)
    p.add_argument("--out-dir", default=".", help="directory for trace.jsonl")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("sweep", help="run an experiment spec")
    p.add_argument("spec", help="key = value spec file")
    _add_model_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("train-ngram", help="train a smoothed n-gram model")
    p.add_argument("corpus", help="text file, one sentence per line")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--out", required=True, help="model JSON output path")
    p.set_defaults(func=_cmd_train_ngram)

    p = sub.add_parser("select-prefixes", help="mine safe-but-driftable prefixes")
    _add_model_flags(p)
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--min-tokens", type=int, default=10)
    p.add_argument("--probe-tokens", type=int, default=10)
    p.add_argument("--probes", type=int, default=3)
    p.add_argument("--max-attempts", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_select_prefixes)

    p = sub.add_parser("probe-server", help="handshake with a model server")
    p.add_argument("endpoint", help="HOST:PORT")
    p.add_argument("--temperature", type=float, default=1.0)
    p.set_defaults(func=_cmd_probe_server)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BackendUnavailableError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (SpecFormatError, TrainingInputError, InvalidTokenError,
            NumericInputError, ProtocolError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except CbfDecodeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

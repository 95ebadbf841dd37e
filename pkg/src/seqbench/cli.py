"""Command-line interface.

Subcommands: train-ngram, train-loglinear, train-ffnnlm, train-rnnlm,
train-encdec, eval-ppl, translate, ensemble-translate, sample, bleu.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.
An optional ``--config file`` supplies ``key=value`` defaults (keys are the
long option names without dashes); explicit command-line flags override it.
Every stochastic run is driven by a single seeded generator (``--seed``,
default 42). Training commands append one line per epoch to a metrics file:
``epoch<TAB>train_loss<TAB>dev_ll<TAB>dev_ppl``.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import corpus as C
from .corpus import DataError
from .evaluate import bleu as corpus_bleu
from .evaluate import evaluate_ll
from .loglinear import LogLinearLM
from .modelfile import load_model, save_model
from .ngram import NGramLM
from .nnet import FFNNLM, RNNLM, train_lm
from .optim import TrainingDivergence, make_optimizer
from .search import LengthPrior, beam_search, greedy, nbest_lines, \
    replace_unknowns, sample
from .seq2seq import EncDecModel, Ensemble, train_encdec

LENGTH_NORM = {"none": "none", "prior": "multinomial_prior",
               "perword": "per_word_normalize"}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> Parser:
    parser = Parser(prog="seqbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def cmd(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", help="key=value defaults file")
        p.add_argument("--seed", type=int, default=42)
        return p

    def train_flags(p, dev=True):
        p.add_argument("--train", required=True, help="training corpus")
        if dev:
            p.add_argument("--dev", help="development corpus")
        p.add_argument("--model", required=True, help="output model path")
        p.add_argument("--metrics", help="per-epoch metrics file "
                                         "(default: MODEL.metrics)")
        p.add_argument("--epochs", type=int, default=5)
        p.add_argument("--lr", type=float, default=0.1)

    def neural_flags(p):
        p.add_argument("--embed", type=int, default=64)
        p.add_argument("--hidden", type=int, default=128)
        p.add_argument("--optimizer", choices=["sgd", "momentum", "adagrad", "adam"],
                       default="adam")
        p.add_argument("--batch-size", type=int, default=8)
        p.add_argument("--clip-norm", type=float, default=5.0)
        p.add_argument("--unk-policy",
                       choices=["keep_all", "replace_singletons", "min_count"],
                       default="replace_singletons")
        p.add_argument("--min-count", type=int, default=2)
        p.add_argument("--v-all", type=int, default=C.DEFAULT_V_ALL)

    p = cmd("train-ngram", help="count-based interpolated n-gram LM")
    p.add_argument("--train", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--alpha", default="0.1",
                   help="held-out mass, one value or comma list per order")
    p.add_argument("--v-all", type=int, default=C.DEFAULT_V_ALL)

    p = cmd("train-loglinear", help="feature-based LM with SGD")
    train_flags(p)
    p.add_argument("--template",
                   choices=["prev_word", "prev2_words", "suffix_k", "bag_of_words"],
                   default="prev2_words")
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--no-decay", action="store_true")
    p.add_argument("--unk-policy",
                   choices=["keep_all", "replace_singletons", "min_count"],
                   default="replace_singletons")
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--v-all", type=int, default=C.DEFAULT_V_ALL)

    p = cmd("train-ffnnlm", help="feed-forward n-gram neural LM")
    train_flags(p)
    neural_flags(p)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--nonlinearity", choices=["tanh", "relu"], default="tanh")

    p = cmd("train-rnnlm", help="recurrent neural LM")
    train_flags(p)
    neural_flags(p)
    p.add_argument("--cell", choices=["rnn", "lstm", "lstm_forget", "gru"],
                   default="lstm_forget")
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--residual", action="store_true")

    p = cmd("train-encdec", help="encoder-decoder translation model")
    p.add_argument("--train-src", required=True)
    p.add_argument("--train-tgt", required=True)
    p.add_argument("--dev-src")
    p.add_argument("--dev-tgt")
    p.add_argument("--model", required=True)
    p.add_argument("--metrics")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.001)
    neural_flags(p)
    p.add_argument("--attention", choices=["none", "dot", "bilinear", "mlp"],
                   default="mlp")
    p.add_argument("--encoder", choices=["forward", "reverse", "bidir"],
                   default="bidir")
    p.add_argument("--bridge", choices=["copy", "concat", "tanh"])
    p.add_argument("--dec-hidden", type=int)
    p.add_argument("--layers", type=int, default=1)

    p = cmd("eval-ppl", help="likelihood / perplexity report")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="target corpus")
    p.add_argument("--source", help="source corpus for conditional models")
    p.add_argument("--out", help="write the report here instead of stdout")

    for name in ("translate", "ensemble-translate"):
        p = cmd(name, help="decode a source corpus")
        if name == "translate":
            p.add_argument("--model", required=True)
        else:
            p.add_argument("--models", required=True,
                           help="comma-separated model paths")
        p.add_argument("--input", required=True)
        p.add_argument("--output", help="default stdout")
        p.add_argument("--search", choices=["greedy", "beam", "sample"],
                       default="greedy")
        p.add_argument("--beam-size", type=int, default=4)
        p.add_argument("--length-norm", choices=["none", "prior", "perword"],
                       default="none")
        p.add_argument("--nbest", type=int, default=0,
                       help="emit an n-best list instead of one line per input")
        p.add_argument("--replace-unk", action="store_true")
        p.add_argument("--max-len", type=int)

    p = cmd("sample", help="draw random sentences from a language model")
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--max-len", type=int, default=100)
    p.add_argument("--output")

    p = cmd("bleu", help="corpus BLEU of hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)

    return parser


def _apply_config(argv: list[str]) -> list[str]:
    """Splice ``--config`` file entries in as defaults before explicit flags."""
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        raise UsageError("--config needs a file argument")
    path = argv[at + 1]
    injected = []
    for i, raw in enumerate(C.read_token_lines(path), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}: line {i} is not key=value")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                injected.append(f"--{key}")
        else:
            injected.extend([f"--{key}", value])
    head = argv[:1]              # subcommand first, then config defaults
    rest = argv[1:at] + argv[at + 2:]
    return head + injected + rest


def _build_vocab_from(path, policy, min_count, v_all):
    return C.build_vocab(C.read_token_lines(path), policy=policy,
                         min_count=min_count, v_all=v_all)


class MetricsLog:
    def __init__(self, path, dev_words):
        self.fh = open(path, "w", encoding="utf-8")
        self.dev_words = max(dev_words, 1)

    def __call__(self, epoch, train_loss, dev_ll):
        try:
            ppl = math.exp(-dev_ll / self.dev_words)
        except OverflowError:
            ppl = math.inf
        self.fh.write(f"{epoch}\t{train_loss!r}\t{dev_ll!r}\t{ppl!r}\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


def _counted_words(sentences) -> int:
    return sum(len(s) for s in sentences)


def _write_lines(lines, path):
    if path is None:
        for line in lines:
            print(line)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("".join(line + "\n" for line in lines))


def run(argv) -> int:
    argv = list(argv)
    parser = build_parser()
    argv = _apply_config(argv)
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("no subcommand given (try --help)")
    rng = np.random.default_rng(args.seed)
    return COMMANDS[args.command](args, rng)


def cmd_train_ngram(args, rng) -> int:
    lines = C.read_token_lines(args.train)
    alphas = [float(a) for a in str(args.alpha).split(",")]
    if len(alphas) == 1:
        alphas = alphas * args.order
    if len(alphas) != args.order:
        raise UsageError("--alpha needs one value or one per order")
    vocab = _build_vocab_from(args.train, "keep_all", 2, args.v_all)
    model = NGramLM.train(lines, n=args.order, alphas=alphas, vocab=vocab)
    save_model(model, args.model)
    return 0


def _metrics(args, dev_sentences):
    path = args.metrics or f"{args.model}.metrics"
    return MetricsLog(path, _counted_words(dev_sentences))


def cmd_train_loglinear(args, rng) -> int:
    train_lines = C.read_token_lines(args.train)
    dev_lines = C.read_token_lines(args.dev) if args.dev else None
    vocab = _build_vocab_from(args.train, args.unk_policy, args.min_count,
                              args.v_all)
    model = LogLinearLM(vocab, args.template)
    dev_sents = [C.encode(vocab, line, append_eos=True)
                 for line in (dev_lines or train_lines)]
    log = _metrics(args, dev_sents)
    try:
        model.train_sgd(train_lines, dev_lines=dev_lines, lr=args.lr,
                        epochs=args.epochs, shuffle=not args.no_shuffle,
                        decay=not args.no_decay, rng=rng, log=log)
    finally:
        log.close()
    save_model(model, args.model)
    return 0


def _train_neural_lm(args, rng, model):
    vocab = model.vocab
    train_sents = [C.encode(vocab, line, append_eos=True)
                   for line in C.read_token_lines(args.train)]
    dev_sents = ([C.encode(vocab, line, append_eos=True)
                  for line in C.read_token_lines(args.dev)]
                 if args.dev else None)
    opt = make_optimizer(args.optimizer, model.parameters(), lr=args.lr,
                         clip_norm=args.clip_norm)
    log = _metrics(args, dev_sents or train_sents)
    try:
        train_lm(model, train_sents, opt, epochs=args.epochs,
                 dev_sentences=dev_sents, batch_size=args.batch_size,
                 rng=rng, log=log)
    finally:
        log.close()
    save_model(model, args.model)
    return 0


def cmd_train_ffnnlm(args, rng) -> int:
    vocab = _build_vocab_from(args.train, args.unk_policy, args.min_count,
                              args.v_all)
    model = FFNNLM(vocab, n=args.order, embed_size=args.embed,
                   hidden_size=args.hidden, nonlinearity=args.nonlinearity,
                   rng=rng)
    return _train_neural_lm(args, rng, model)


def cmd_train_rnnlm(args, rng) -> int:
    vocab = _build_vocab_from(args.train, args.unk_policy, args.min_count,
                              args.v_all)
    model = RNNLM(vocab, cell=args.cell, embed_size=args.embed,
                  hidden_size=args.hidden, layers=args.layers,
                  residual=args.residual, rng=rng)
    return _train_neural_lm(args, rng, model)


def cmd_train_encdec(args, rng) -> int:
    pairs_text = C.read_parallel(args.train_src, args.train_tgt)
    src_vocab = _build_vocab_from(args.train_src, args.unk_policy,
                                  args.min_count, args.v_all)
    tgt_vocab = _build_vocab_from(args.train_tgt, args.unk_policy,
                                  args.min_count, args.v_all)
    direction = {"bidir": "bidirectional"}.get(args.encoder, args.encoder)
    model = EncDecModel(src_vocab, tgt_vocab, embed_size=args.embed,
                        hidden_size=args.hidden, dec_hidden=args.dec_hidden,
                        layers=args.layers, encoder=direction,
                        bridge=args.bridge, attention=args.attention, rng=rng)
    pairs = [(C.encode(src_vocab, f), C.encode(tgt_vocab, e, append_eos=True))
             for f, e in pairs_text]
    model.length_prior = LengthPrior.from_pairs(pairs)
    dev_pairs = None
    if args.dev_src and args.dev_tgt:
        dev_pairs = [(C.encode(src_vocab, f), C.encode(tgt_vocab, e, append_eos=True))
                     for f, e in C.read_parallel(args.dev_src, args.dev_tgt)]
    opt = make_optimizer(args.optimizer, model.parameters(), lr=args.lr,
                         clip_norm=args.clip_norm)
    dev_words = _counted_words([e for _, e in (dev_pairs or pairs)])
    path = args.metrics or f"{args.model}.metrics"
    log = MetricsLog(path, dev_words)
    try:
        train_encdec(model, pairs, opt, epochs=args.epochs,
                     dev_pairs=dev_pairs, rng=rng, log=log)
    finally:
        log.close()
    save_model(model, args.model)
    return 0


def cmd_eval_ppl(args, rng) -> int:
    model = load_model(args.model)
    if isinstance(model, EncDecModel):
        if not args.source:
            raise UsageError("conditional models need --source")
        pairs = C.read_parallel(args.source, args.data)
        data = [(f.split(), e.split()) for f, e in pairs]
    else:
        data = [line.split() for line in C.read_token_lines(args.data)]
    report = evaluate_ll(model, data)
    _write_lines(report.lines(), args.out)
    return 0


def _decode_corpus(model, args, rng) -> int:
    if not isinstance(model, (EncDecModel, Ensemble)):
        raise UsageError("translate needs a conditional model; use sample for "
                         "language models")
    src_vocab = (model.src_vocab if isinstance(model, EncDecModel)
                 else model.models[0].src_vocab)
    lines = C.read_token_lines(args.input)
    mode = LENGTH_NORM[args.length_norm]
    prior = getattr(model, "length_prior", None)
    if isinstance(model, Ensemble):
        prior = getattr(model.models[0], "length_prior", None)
    if mode == "multinomial_prior" and prior is None:
        raise DataError("model file carries no length prior; retrain or use "
                        "--length-norm none/perword")
    out = []
    for index, line in enumerate(lines):
        tokens = line.split()
        source_ids = C.encode(src_vocab, tokens)
        if not source_ids:
            raise DataError(f"{args.input}: line {index + 1} is empty")
        if args.search == "greedy":
            hyps = [greedy(model, source_ids, max_len=args.max_len)]
        elif args.search == "sample":
            hyps = [sample(model, source_ids, rng=rng, max_len=args.max_len)]
        else:
            hyps = beam_search(model, source_ids, beam_size=args.beam_size,
                               max_len=args.max_len, length_mode=mode,
                               length_prior=prior)
        if args.nbest:
            out.extend(nbest_lines(hyps[:args.nbest], index, model.vocab))
        else:
            best = hyps[0]
            if args.replace_unk:
                words = replace_unknowns(best, tokens, model.vocab)
            else:
                words = best.surface(model.vocab)
            out.append(" ".join(words))
    _write_lines(out, args.output)
    return 0


def cmd_translate(args, rng) -> int:
    return _decode_corpus(load_model(args.model), args, rng)


def cmd_ensemble_translate(args, rng) -> int:
    models = [load_model(path) for path in args.models.split(",")]
    return _decode_corpus(Ensemble(models), args, rng)


def cmd_sample(args, rng) -> int:
    model = load_model(args.model)
    if isinstance(model, EncDecModel):
        raise UsageError("sample draws from unconditional language models; "
                         "use translate --search sample for conditional ones")
    out = []
    for _ in range(args.count):
        hyp = sample(model, rng=rng, max_len=args.max_len)
        out.append(" ".join(hyp.surface(model.vocab)))
    _write_lines(out, args.output)
    return 0


def cmd_bleu(args, rng) -> int:
    report = corpus_bleu(C.read_token_lines(args.hyp), C.read_token_lines(args.ref))
    _write_lines(report.lines(), None)
    return 0


COMMANDS = {
    "train-ngram": cmd_train_ngram,
    "train-loglinear": cmd_train_loglinear,
    "train-ffnnlm": cmd_train_ffnnlm,
    "train-rnnlm": cmd_train_rnnlm,
    "train-encdec": cmd_train_encdec,
    "eval-ppl": cmd_eval_ppl,
    "translate": cmd_translate,
    "ensemble-translate": cmd_ensemble_translate,
    "sample": cmd_sample,
    "bleu": cmd_bleu,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return run(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

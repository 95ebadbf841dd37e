"""Log-linear n-gram language model with closed-form gradients.

Scores are a sparse affine map s = W x + b over context features, turned into
probabilities by a max-shifted softmax. Training is per-example stochastic
gradient descent with shuffling, halve-on-plateau learning-rate decay, and
best-on-dev early stopping; the gradients are the hand-derived

    dl/db     = p - onehot(target)
    dl/dW[:,j] = x_j * (p - onehot(target))

so only the bias and the active feature columns are touched per update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autograd import softmax
from .corpus import BOS_ID, UNK_ID, Vocabulary, encode
from .optim import TrainingDivergence

TEMPLATES = ("prev_word", "prev2_words", "suffix_k", "bag_of_words")


@dataclass
class FeatureVector:
    """Sparse feature activations: unique indices below ``dim`` with values."""

    active: list[tuple[int, float]]
    dim: int


class FeatureTemplate:
    """Deterministic feature-index registry for one template.

    Index blocks are allocated in template order so a rebuilt model assigns
    identical indices. ``suffix_k`` registers the distinct k-character
    suffixes of the vocabulary's tokens.
    """

    def __init__(self, name: str, vocab: Vocabulary, suffix_len: int = 3):
        if name not in TEMPLATES:
            raise ValueError(f"unknown feature template {name!r}")
        self.name = name
        self.suffix_len = suffix_len
        v = len(vocab)
        if name == "prev_word" or name == "bag_of_words":
            self.dim = v
        elif name == "prev2_words":
            self.dim = 2 * v
        else:
            self.suffixes = {}
            for tok in vocab.tokens:
                suf = tok[-suffix_len:]
                if suf not in self.suffixes:
                    self.suffixes[suf] = len(self.suffixes)
            self.dim = len(self.suffixes)
        self.vocab = vocab

    @property
    def arity(self) -> int:
        return 2 if self.name == "prev2_words" else 1

    def featurize(self, context) -> FeatureVector:
        """Feature vector for a context id sequence (most recent id last)."""
        context = list(context)
        while len(context) < self.arity:
            context = [BOS_ID] + context
        if self.name == "prev_word":
            return FeatureVector([(context[-1], 1.0)], self.dim)
        if self.name == "prev2_words":
            v = len(self.vocab)
            return FeatureVector([(context[-1], 1.0), (v + context[-2], 1.0)], self.dim)
        if self.name == "suffix_k":
            tok = self.vocab.token_of(context[-1])
            idx = self.suffixes.get(tok[-self.suffix_len:])
            return FeatureVector([] if idx is None else [(idx, 1.0)], self.dim)
        # bag_of_words: sum one-hots over all prior words in the sentence
        counts: dict[int, float] = {}
        for tok in context:
            if tok == BOS_ID:
                continue
            counts[tok] = counts.get(tok, 0.0) + 1.0
        return FeatureVector(sorted(counts.items()), self.dim)


def featurize(context, vocab: Vocabulary, template: str) -> FeatureVector:
    return FeatureTemplate(template, vocab).featurize(context)


def score(W: np.ndarray, b: np.ndarray, x: FeatureVector) -> np.ndarray:
    """s = sum over active features of W[:,j] * x_j, plus the bias."""
    if x.dim != W.shape[1]:
        raise ValueError(f"feature dim {x.dim} != weight columns {W.shape[1]}")
    s = b[:, 0].copy()
    for j, value in x.active:
        s += W[:, j] * value
    return s


def loss_and_grad(W, b, x: FeatureVector, target: int):
    """Negative log likelihood of the target plus its sparse gradient.

    Returns (loss, grad_b, [(j, grad_column_j), ...]); columns not active in
    ``x`` have zero gradient and are omitted.
    """
    p = softmax(score(W, b, x))[:, 0]
    loss = -math.log(p[target])
    if not math.isfinite(loss):
        raise TrainingDivergence("log-linear loss is not finite")
    grad_b = p.copy()
    grad_b[target] -= 1.0
    grad_cols = [(j, value * grad_b) for j, value in x.active]
    return loss, grad_b, grad_cols


class LogLinearLM:
    """Feature-based n-gram LM trained by stochastic gradient descent."""

    kind = "loglinear"

    def __init__(self, vocab: Vocabulary, template: str, suffix_len: int = 3,
                 W: np.ndarray | None = None, b: np.ndarray | None = None):
        self.vocab = vocab
        self.template = FeatureTemplate(template, vocab, suffix_len)
        v = len(vocab)
        self.W = np.zeros((v, self.template.dim)) if W is None else W
        self.b = np.zeros((v, 1)) if b is None else b

    @property
    def n(self) -> int:
        return self.template.arity + 1

    def _instances(self, lines):
        """(context_feature, target) pairs over every position of every line."""
        out = []
        for line in lines:
            ids = encode(self.vocab, line, append_eos=True)
            history: list[int] = []
            for tok in ids:
                out.append((self.template.featurize(history), tok))
                history.append(tok)
        return out

    def corpus_log_likelihood(self, lines) -> float:
        total = 0.0
        for x, target in self._instances(lines):
            p = softmax(score(self.W, self.b, x))[:, 0]
            total += math.log(p[target])
        return total

    def train_sgd(self, train_lines, dev_lines=None, lr: float = 0.1,
                  epochs: int = 5, shuffle: bool = True, decay: bool = True,
                  early_stop: bool = True, rng=None, log=None):
        """Per-example SGD; returns the per-epoch dev log-likelihood history.

        The parameters left on the model are the best-dev snapshot when a dev
        set is given, otherwise the final-epoch parameters.
        """
        rng = rng or np.random.default_rng(0)
        instances = self._instances(train_lines)
        history = []
        best_ll, best = -np.inf, None
        for epoch in range(1, epochs + 1):
            if shuffle:
                order = rng.permutation(len(instances))
            else:
                order = range(len(instances))
            train_loss = 0.0
            for i in order:
                x, target = instances[i]
                loss, grad_b, grad_cols = loss_and_grad(self.W, self.b, x, target)
                train_loss += loss
                self.b[:, 0] -= lr * grad_b
                for j, col in grad_cols:
                    self.W[:, j] -= lr * col
            dev_ll = (self.corpus_log_likelihood(dev_lines)
                      if dev_lines is not None else -train_loss)
            history.append(dev_ll)
            if log is not None:
                log(epoch, train_loss, dev_ll)
            if dev_ll > best_ll:
                best_ll, best = dev_ll, (self.W.copy(), self.b.copy())
            elif decay:
                lr /= 2.0
        if early_stop and best is not None:
            self.W, self.b = best
        return history

    # ---- evaluation / generation protocol ----------------------------------

    def next_distribution(self, history_ids) -> np.ndarray:
        x = self.template.featurize(list(history_ids))
        return softmax(score(self.W, self.b, x))[:, 0]

    def score_sentence(self, tokens):
        ids = encode(self.vocab, tokens, append_eos=True)
        logp, unk_count = 0.0, 0
        history: list[int] = []
        for tok in ids:
            logp += math.log(self.next_distribution(history)[tok])
            if tok == UNK_ID:
                unk_count += 1
                logp -= math.log(self.vocab.v_all)
            history.append(tok)
        return logp, len(ids), unk_count, -unk_count * math.log(self.vocab.v_all)

    def start(self, source_ids=None):
        if source_ids is not None:
            raise ValueError("log-linear LM is unconditional")
        return ()

    def step(self, state, prev_id: int):
        history = state + (prev_id,) if prev_id != BOS_ID else state
        p = self.next_distribution(history).copy()
        p[UNK_ID] += p[BOS_ID]
        p[BOS_ID] = 0.0
        return p, history, None

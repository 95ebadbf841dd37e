"""Output generation: ancestral sampling, greedy search, and beam search.

All three run over any model exposing the decode protocol:

    state = model.start(source_ids_or_None)
    p, state, alpha = model.step(state, previous_token_id)

where ``p`` is the next-token distribution over the model's target vocabulary
and ``alpha`` is the attention vector when the model has one (else None).

Hypothesis scores are accumulated natural-log probabilities. Ties anywhere
break toward the lexicographically smallest token sequence (hence the lowest
token id, then the shorter hypothesis), giving every search a total order and
reproducible output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import BOS_ID, EOS_ID, UNK_ID, Vocabulary

LENGTH_MODES = ("none", "multinomial_prior", "per_word_normalize")


@dataclass
class Hypothesis:
    """A (possibly partial) decoder output and everything needed to extend it."""

    tokens: list[int]
    logprob: float
    state: object = None
    finished: bool = False
    truncated: bool = False
    attention_trace: list[int] | None = None
    score: float | None = None          # rescored value; logprob until then

    @property
    def final_score(self) -> float:
        return self.logprob if self.score is None else self.score

    def surface(self, vocab: Vocabulary) -> list[str]:
        """Token strings without the terminal end-of-sentence marker."""
        ids = self.tokens[:-1] if self.finished else self.tokens
        return [vocab.token_of(i) for i in ids]


@dataclass
class LengthPrior:
    """Multinomial P(|E| given |F|) estimated from training pair lengths.

    Lengths count the terminal EOS on the target side (matching hypothesis
    lengths) and the raw token count on the source side. Unseen length pairs
    are floored at ``eps`` instead of probability zero so rescoring never
    produces -inf.
    """

    pair_counts: dict = field(default_factory=dict)     # (|E|, |F|) -> count
    source_counts: dict = field(default_factory=dict)   # |F| -> count
    eps: float = 1e-9

    @classmethod
    def from_pairs(cls, pairs) -> "LengthPrior":
        prior = cls()
        for f, e in pairs:
            key = (len(e), len(f))
            prior.pair_counts[key] = prior.pair_counts.get(key, 0) + 1
            prior.source_counts[len(f)] = prior.source_counts.get(len(f), 0) + 1
        return prior

    def log_prob(self, e_len: int, f_len: int) -> float:
        total = self.source_counts.get(f_len, 0)
        if total == 0:
            return math.log(self.eps)
        p = self.pair_counts.get((e_len, f_len), 0) / total
        return math.log(max(p, self.eps))


def default_max_len(source_ids) -> int:
    return 100 if source_ids is None else 2 * len(source_ids) + 10


def _trace_entry(alpha) -> int:
    return -1 if alpha is None else int(np.argmax(alpha))


def sample(model, source_ids=None, rng=0, max_len: int | None = None) -> Hypothesis:
    """Ancestral sampling: draw each token from the model distribution."""
    if max_len is None:
        max_len = default_max_len(source_ids)
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    state = model.start(source_ids)
    hyp = Hypothesis(tokens=[], logprob=0.0, attention_trace=[])
    prev = BOS_ID
    for _ in range(max_len):
        p, state, alpha = model.step(state, prev)
        tok = int(rng.choice(len(p), p=p / p.sum()))
        hyp.tokens.append(tok)
        hyp.logprob += math.log(p[tok])
        hyp.attention_trace.append(_trace_entry(alpha))
        if tok == EOS_ID:
            hyp.finished = True
            break
        prev = tok
    hyp.truncated = not hyp.finished
    hyp.state = state
    return hyp


def greedy(model, source_ids=None, max_len: int | None = None) -> Hypothesis:
    """Pick the most probable token at every step (ties: lowest id)."""
    if max_len is None:
        max_len = default_max_len(source_ids)
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    state = model.start(source_ids)
    hyp = Hypothesis(tokens=[], logprob=0.0, attention_trace=[])
    prev = BOS_ID
    for _ in range(max_len):
        p, state, alpha = model.step(state, prev)
        tok = int(np.argmax(p))       # argmax returns the first (lowest) id on ties
        hyp.tokens.append(tok)
        hyp.logprob += math.log(p[tok])
        hyp.attention_trace.append(_trace_entry(alpha))
        if tok == EOS_ID:
            hyp.finished = True
            break
        prev = tok
    hyp.truncated = not hyp.finished
    hyp.state = state
    return hyp


def _rescore(hyp: Hypothesis, mode: str, prior: LengthPrior | None,
             source_len: int | None) -> float:
    if mode == "none":
        return hyp.logprob
    if mode == "per_word_normalize":
        return hyp.logprob / max(len(hyp.tokens), 1)
    if mode == "multinomial_prior":
        if prior is None:
            raise ValueError("multinomial_prior rescoring needs a LengthPrior")
        if source_len is None:
            raise ValueError("multinomial_prior rescoring needs a source sentence")
        return hyp.logprob + prior.log_prob(len(hyp.tokens), source_len)
    raise ValueError(f"unknown length mode {mode!r}; choose from {LENGTH_MODES}")


def beam_search(model, source_ids=None, beam_size: int = 4,
                max_len: int | None = None, length_mode: str = "none",
                length_prior: LengthPrior | None = None) -> list[Hypothesis]:
    """Breadth-limited search keeping the best ``beam_size`` partial outputs.

    Each step expands every active hypothesis over the whole vocabulary,
    prunes back to the top ``beam_size`` by accumulated log probability, and
    moves those ending in EOS to a completed pool. Search stops once the pool
    holds ``beam_size`` hypotheses (or nothing is left to extend, or
    ``max_len`` is hit); the pool is then rescored by ``length_mode`` and
    returned best-first. If nothing completed, the best unfinished hypothesis
    is returned with its truncated flag set.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    if length_mode not in LENGTH_MODES:
        raise ValueError(f"unknown length mode {length_mode!r}")
    if max_len is None:
        max_len = default_max_len(source_ids)
    source_len = None if source_ids is None else len(source_ids)

    start = Hypothesis(tokens=[], logprob=0.0, state=model.start(source_ids),
                       attention_trace=[])
    active = [start]
    completed: list[Hypothesis] = []
    for _ in range(max_len):
        candidates = []
        for hyp in active:
            prev = hyp.tokens[-1] if hyp.tokens else BOS_ID
            p, new_state, alpha = model.step(hyp.state, prev)
            with np.errstate(divide="ignore"):
                logp = np.log(p)
            trace_tail = _trace_entry(alpha)
            for tok in range(len(p)):
                if logp[tok] == -math.inf:
                    continue
                candidates.append((hyp.logprob + logp[tok], hyp, tok,
                                   new_state, trace_tail))
        candidates.sort(key=lambda c: (-c[0], tuple(c[1].tokens) + (c[2],)))
        active = []
        for score, parent, tok, state, trace_tail in candidates[:beam_size]:
            child = Hypothesis(tokens=parent.tokens + [tok], logprob=score,
                               state=state, finished=tok == EOS_ID,
                               attention_trace=parent.attention_trace + [trace_tail])
            (completed if child.finished else active).append(child)
        if len(completed) >= beam_size or not active:
            break

    if not completed:
        best = min(active, key=lambda h: (-h.logprob, tuple(h.tokens)))
        best.truncated = True
        best.score = _rescore(best, length_mode, length_prior, source_len)
        return [best]

    for hyp in completed:
        hyp.score = _rescore(hyp, length_mode, length_prior, source_len)
    completed.sort(key=lambda h: (-h.score, tuple(h.tokens)))
    return completed[:beam_size]


def replace_unknowns(hyp: Hypothesis, source_tokens, vocab: Vocabulary) -> list[str]:
    """Swap each unknown output token for the source word it attended to most."""
    if hyp.attention_trace is None or any(t < 0 for t in hyp.attention_trace):
        raise ValueError("unknown-word replacement needs an attentional hypothesis")
    surface = []
    ids = hyp.tokens[:-1] if hyp.finished else hyp.tokens
    for pos, tok in enumerate(ids):
        if tok == UNK_ID:
            surface.append(source_tokens[hyp.attention_trace[pos]])
        else:
            surface.append(vocab.token_of(tok))
    return surface


def nbest_lines(hypotheses, index: int, vocab: Vocabulary) -> list[str]:
    """Moses-style n-best rows: ``index ||| tokens ||| score``."""
    return [f"{index} ||| {' '.join(h.surface(vocab))} ||| {h.final_score:.6f}"
            for h in hypotheses]

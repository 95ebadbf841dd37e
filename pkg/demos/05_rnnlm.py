"""Recurrent language models: memory across time steps.

A feed-forward trigram model cannot learn "close the bracket you opened five
tokens ago"; an LSTM can. We train both on nested bracket strings and compare,
then draw random sentences from the recurrent model.
"""

import numpy as np

from seqbench import FFNNLM, RNNLM, Adam, build_vocab, evaluate_ll, train_lm
from seqbench.corpus import encode
from seqbench.search import sample

rng = np.random.default_rng(3)


def bracket_sentence():
    depth = int(rng.integers(1, 5))
    middle = ["x"] * int(rng.integers(1, 4))
    return " ".join(["("] * depth + middle + [")"] * depth)


train_lines = [bracket_sentence() for _ in range(200)]
dev_lines = [bracket_sentence() for _ in range(40)]
vocab = build_vocab(train_lines, policy="keep_all")
train_sents = [encode(vocab, s, append_eos=True) for s in train_lines]
dev_sents = [encode(vocab, s, append_eos=True) for s in dev_lines]

models = {
    "feed-forward trigram": FFNNLM(vocab, n=3, embed_size=8, hidden_size=16,
                                   rng=np.random.default_rng(1)),
    "LSTM": RNNLM(vocab, cell="lstm_forget", embed_size=8, hidden_size=16,
                  rng=np.random.default_rng(2)),
}
for name, model in models.items():
    opt = Adam(model.parameters(), lr=0.01, clip_norm=5.0)
    train_lm(model, train_sents, opt, epochs=15, dev_sentences=dev_sents,
             batch_size=8, rng=np.random.default_rng(4))
    ppl = evaluate_ll(model, [s.split() for s in dev_lines]).perplexity
    print(f"{name:22s} dev perplexity {ppl:7.3f}")

print()
print("samples from the LSTM (balanced brackets come from memory, not luck):")
lstm = models["LSTM"]
gen = np.random.default_rng(42)
for _ in range(5):
    hyp = sample(lstm, rng=gen, max_len=30)
    text = " ".join(hyp.surface(vocab))
    balanced = text.count("(") == text.count(")")
    print(f"  {text:30s} {'balanced' if balanced else 'unbalanced'}")

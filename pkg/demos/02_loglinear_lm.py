"""Log-linear language model: features, hand-derived gradients, SGD.

Trains a previous-two-words model with shuffling, learning-rate decay, and
best-on-dev early stopping, then inspects what the learned weights say about
a context.
"""

import numpy as np

from seqbench import LogLinearLM, build_vocab, evaluate_ll
from seqbench.autograd import softmax
from seqbench.corpus import encode
from seqbench.loglinear import score

train = [
    "the cat sat", "the dog sat", "a cat ran", "the dog ran",
    "a dog sat", "the cat ran", "the bird sang", "a bird flew",
    "the cat slept", "a dog slept", "the bird flew", "a cat sat",
] * 4
dev = ["the cat sat", "a bird flew", "the dog slept"]

vocab = build_vocab(train, policy="keep_all")
model = LogLinearLM(vocab, "prev2_words")

print("feature space: two one-hot blocks of width", len(vocab),
      "->", model.template.dim, "features")
print()

history = model.train_sgd(train, dev_lines=dev, lr=0.2, epochs=8,
                          rng=np.random.default_rng(0),
                          log=lambda e, tl, dl: print(
                              f"  epoch {e}: train loss {tl:8.3f}   dev ll {dl:8.3f}"))
print()
print(f"best dev log-likelihood {max(history):.3f} (parameters restored to it)")

report = evaluate_ll(model, [s.split() for s in dev])
print(f"dev perplexity {report.perplexity:.3f}")
print()

context = encode(vocab, "the cat")
x = model.template.featurize(context)
p = softmax(score(model.W, model.b, x))[:, 0]
top = np.argsort(-p)[:4]
print("after 'the cat', the model expects:")
for tok_id in top:
    print(f"  {vocab.token_of(int(tok_id)):8s} {p[tok_id]:.3f}")

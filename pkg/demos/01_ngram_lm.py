"""Count-based n-gram language models with linear interpolation.

Trains unigram through trigram models on a tiny corpus, shows how held-out
interpolation mass trades training-set fit for robustness on unseen text, and
reports the likelihood/perplexity breakdown including the unknown-word share.
"""

from seqbench import NGramLM, evaluate_ll

train = [
    "the cat sat on the mat",
    "the dog sat on the rug",
    "a cat chased the dog",
    "the dog chased a cat",
    "a bird sat on the mat",
]
test = [
    "the cat chased a bird",
    "a dog sat on the mat",
    "the platypus sat on the rug",     # "platypus" is out of vocabulary
]

print("=== effect of model order (alpha = 0.1 everywhere) ===")
for n in (1, 2, 3):
    model = NGramLM.train(train, n=n, alphas=0.1)
    train_ppl = evaluate_ll(model, [s.split() for s in train]).perplexity
    test_ppl = evaluate_ll(model, [s.split() for s in test]).perplexity
    print(f"  {n}-gram: train ppl {train_ppl:8.3f}   test ppl {test_ppl:10.3f}")

print()
print("=== effect of interpolation mass (bigram) ===")
for alpha in (0.001, 0.1, 0.5, 0.9):
    model = NGramLM.train(train, n=2, alphas=alpha)
    train_ppl = evaluate_ll(model, [s.split() for s in train]).perplexity
    test_ppl = evaluate_ll(model, [s.split() for s in test]).perplexity
    print(f"  alpha={alpha:<6} train ppl {train_ppl:8.3f}   test ppl {test_ppl:10.3f}")

print()
print("=== full evaluation report (trigram, test set) ===")
model = NGramLM.train(train, n=3, alphas=0.1)
for line in evaluate_ll(model, [s.split() for s in test]).lines():
    print(" ", line)
print()
print("the unknown-word portion above is exactly the uniform 1/v_all factor")
print("paid once for the out-of-vocabulary token 'platypus'")

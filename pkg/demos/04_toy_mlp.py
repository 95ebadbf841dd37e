"""The two-input equal/unequal function: why hidden layers matter.

No linear model can output +1 when its two inputs agree and -1 when they
differ. A two-layer perceptron with a tanh hidden layer learns it in a few
dozen epochs -- but only from a random starting point; perfectly symmetric
zero weights stay stuck.
"""

import math

from seqbench import train_toy_mlp
from seqbench.nnet import TOY_EQUALITY_DATA

print("target function:")
for x, y in TOY_EQUALITY_DATA:
    print(f"  x = {x!s:10s} y = {y:+d}")
print()

model, losses = train_toy_mlp(TOY_EQUALITY_DATA, hidden_size=20, lr=0.1,
                              max_epochs=1000, seed=7)
print(f"random init: converged after {len(losses)} epochs "
      f"(loss {losses[0]:.3f} -> {losses[-1]:.5f})")
for x, y in TOY_EQUALITY_DATA:
    out = model.predict(x)
    mark = "ok" if math.copysign(1, out) == y else "WRONG"
    print(f"  f({x!s:10s}) = {out:+.3f}   want {y:+d}   {mark}")
print()

zero_model, zero_losses = train_toy_mlp(TOY_EQUALITY_DATA, hidden_size=20,
                                        lr=0.1, max_epochs=200, seed=7,
                                        zero_init=True)
correct = sum(math.copysign(1, zero_model.predict(x)) == y
              for x, y in TOY_EQUALITY_DATA)
print(f"zero init: {correct}/4 correct after {len(zero_losses)} epochs -- "
      "symmetric hidden units never differentiate")

"""Shared test oracles: central finite differences against analytic gradients."""

import numpy as np

from seqbench.autograd import Parameter


def rel_error(a: float, b: float, floor: float = 1e-3) -> float:
    """Relative error with an absolute floor so near-zero gradients compare
    at absolute scale instead of amplifying rounding noise."""
    return abs(a - b) / max(abs(a), abs(b), floor)


def fd_gradients(build_loss, params, h: float = 1e-5):
    """Central finite differences of ``build_loss`` w.r.t. every param entry.

    ``build_loss`` must construct a fresh graph from the current parameter
    values and return its scalar loss value.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.value)
        flat_v = p.value.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_v.size):
            orig = flat_v[i]
            flat_v[i] = orig + h
            up = float(build_loss())
            flat_v[i] = orig - h
            down = float(build_loss())
            flat_v[i] = orig
            flat_g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def analytic_gradients(build_graph, params):
    for p in params:
        p.zero_grad()
    graph = build_graph()
    graph.forward()
    graph.backward()
    return [p.grad.copy() for p in params]


def max_gradient_error(build_graph, params, h: float = 1e-5) -> float:
    """Worst relative error between analytic and finite-difference gradients."""
    analytic = analytic_gradients(build_graph, params)
    numeric = fd_gradients(lambda: build_graph().forward()[0, 0], params, h=h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        for x, y in zip(a.reshape(-1), n.reshape(-1)):
            worst = max(worst, rel_error(x, y))
    return worst


def random_params(rng, shapes, scale=0.5, prefix="p"):
    return [Parameter(f"{prefix}{i}", rng.uniform(-scale, scale, size=shape))
            for i, shape in enumerate(shapes)]


# builders for per-op gradient checks: name -> fn(graph, params) -> output node
OP_GRADCHECK_CASES = {
    "matmul": lambda g, ps: g.matmul(g.param(ps[0]), g.param(ps[1])),
    "add": lambda g, ps: g.add(g.param(ps[0]), g.param(ps[1])),
    "add_broadcast": lambda g, ps: g.add(g.param(ps[0]), g.param(ps[1])),
    "cmult": lambda g, ps: g.cmult(g.param(ps[0]), g.param(ps[1])),
    "tanh": lambda g, ps: g.tanh(g.param(ps[0])),
    "sigmoid": lambda g, ps: g.sigmoid(g.param(ps[0])),
    "relu": lambda g, ps: g.relu(g.param(ps[0])),
    "softmax": lambda g, ps: g.softmax(g.param(ps[0])),
    "concat_rows": lambda g, ps: g.concat_rows(*[g.param(p) for p in ps]),
    "concat_cols": lambda g, ps: g.concat_cols(*[g.param(p) for p in ps]),
    "transpose": lambda g, ps: g.transpose(g.param(ps[0])),
    "lookup_column": lambda g, ps: g.lookup_column(g.param(ps[0]), [1, 0, 1]),
    "scale": lambda g, ps: g.scale(g.param(ps[0]), 1.7),
}


def op_gradcheck_shapes(name, rng):
    n, m, k = rng.integers(2, 5, size=3)
    if name == "matmul":
        return [(n, m), (m, k)]
    if name in ("add", "cmult"):
        return [(n, m), (n, m)]
    if name == "add_broadcast":
        return [(n, 1), (n, m)]
    if name == "concat_rows":
        return [(n, m), (k, m)]
    if name == "concat_cols":
        return [(n, m), (n, k)]
    if name == "lookup_column":
        return [(n, 3)]
    return [(n, m)]


def run_op_gradcheck(name, trials=50):
    """Worst analytic-vs-finite-difference error over random instances of one op."""
    from seqbench.autograd import Graph

    rng = np.random.default_rng(abs(hash(name)) % (2**32))
    worst = 0.0
    for _ in range(trials):
        shapes = op_gradcheck_shapes(name, rng)
        params = random_params(rng, shapes, scale=0.6)
        g0 = Graph()
        OP_GRADCHECK_CASES[name](g0, params)
        projection = rng.normal(size=g0.forward().shape)

        def build():
            g = Graph()
            out = OP_GRADCHECK_CASES[name](g, params)
            g.sum(g.cmult(out, g.input(projection)))
            return g

        worst = max(worst, max_gradient_error(build, params))
    return worst


EOS_ID = 1   # mirrors the package-wide reserved id


class TableModel:
    """Toy sequence model backed by an explicit prefix -> distribution table.

    Prefixes are tuples of generated token ids (no start symbol). Unlisted
    prefixes fall back to "always end the sentence".
    """

    def __init__(self, table, vocab=None):
        self.table = {tuple(k): np.asarray(v, dtype=float) for k, v in table.items()}
        self.vocab_size = len(next(iter(self.table.values())))
        self.vocab = vocab
        self._eos_only = np.zeros(self.vocab_size)
        self._eos_only[EOS_ID] = 1.0

    def start(self, source_ids=None):
        return None     # no tokens consumed yet; step() ignores the start symbol

    def step(self, state, prev_id):
        prefix = () if state is None else state + (prev_id,)
        p = self.table.get(prefix, self._eos_only)
        return p.copy(), prefix, None


def random_table_model(rng, vocab_size=3, max_len=4, min_eos=0.0):
    """Random conditional distributions for every prefix up to max_len."""
    table = {}

    def fill(prefix):
        if len(prefix) >= max_len:
            return
        p = rng.dirichlet(np.ones(vocab_size))
        if min_eos > 0.0:
            p = (1.0 - min_eos) * p
            p[EOS_ID] += min_eos
        table[prefix] = p
        for tok in range(vocab_size):
            if tok != EOS_ID:
                fill(prefix + (tok,))

    fill(())
    return TableModel(table)


def enumerate_sequences(model, max_len):
    """All EOS-terminated token sequences of length <= max_len with their
    log probabilities, by brute-force tree walk."""
    results = []

    def walk(prefix, state, logprob):
        if len(prefix) >= max_len:
            return
        p, new_state, _ = model.step(state, prefix[-1] if prefix else 0)
        for tok in range(len(p)):
            if p[tok] <= 0.0:
                continue
            score = logprob + np.log(p[tok])
            seq = prefix + (tok,)
            if tok == EOS_ID:
                results.append((list(seq), float(score)))
            else:
                walk(seq, new_state, score)

    walk((), model.start(), 0.0)
    return results


def brute_force_best(model, max_len):
    seqs = enumerate_sequences(model, max_len)
    return min(seqs, key=lambda item: (-item[1], tuple(item[0])))

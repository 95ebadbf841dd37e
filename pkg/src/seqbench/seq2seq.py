"""Conditional sequence models: encoder-decoders with optional attention.

The source sentence is encoded by a recurrent stack running forward, in
reverse, or in both directions (with per-word states concatenated). The
decoder is initialized from the encoder by one of three bridges: copying the
final encoder state, concatenating the two final bidirectional states, or a
tanh layer mapping them into the decoder's size. With attention enabled the
decoder consumes the previous context vector alongside the word embedding,
scores every source column against its hidden state (dot, bilinear, or MLP
score), mixes the columns with the softmaxed weights into a context vector,
and feeds [hidden; context] to the output softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autograd import Graph, Node, NonFiniteError, Parameter
from .corpus import BOS_ID, UNK_ID, Vocabulary, encode
from .nnet import RecurrentState, StackedRNN, embedding_init, glorot
from .optim import EpochTracker, Optimizer, TrainingDivergence

ENCODER_DIRECTIONS = ("forward", "reverse", "bidirectional")
BRIDGE_KINDS = ("copy", "concat", "tanh")
ATTENTION_KINDS = ("none", "dot", "bilinear", "mlp")


@dataclass
class SourceEncoding:
    """Frozen per-word source encodings plus the decoder's starting state."""

    H: np.ndarray                       # (encoding_dim, |F|)
    init_layers: list                   # [(h, c or None), ...] per decoder layer
    source_ids: list[int]


@dataclass
class EncDecState:
    """One decode session's mutable half: layer states and fed-back context."""

    encoding: SourceEncoding
    layers: list
    context: np.ndarray | None


class EncDecModel:
    kind = "encdec"

    def __init__(self, src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                 embed_size: int = 32, hidden_size: int = 32,
                 dec_hidden: int | None = None, layers: int = 1,
                 encoder: str = "bidirectional", bridge: str | None = None,
                 attention: str = "mlp", attn_hidden: int | None = None,
                 cell: str = "lstm_forget", rng=None):
        if encoder not in ENCODER_DIRECTIONS:
            raise ValueError(f"unknown encoder direction {encoder!r}")
        if attention not in ATTENTION_KINDS:
            raise ValueError(f"unknown attention kind {attention!r}")
        if bridge is None:
            bridge = "tanh" if encoder == "bidirectional" else "copy"
        if bridge not in BRIDGE_KINDS:
            raise ValueError(f"unknown bridge kind {bridge!r}")
        if bridge == "concat" and encoder != "bidirectional":
            raise ValueError("concat bridge requires a bidirectional encoder")

        rng = rng or np.random.default_rng(0)
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.embed_size = embed_size
        self.hidden_size = hidden_size
        self.layers = layers
        self.encoder_direction = encoder
        self.bridge = bridge
        self.attention = attention
        self.cell = cell

        self.src_dim = hidden_size * (2 if encoder == "bidirectional" else 1)
        if dec_hidden is None:
            dec_hidden = self.src_dim if bridge in ("copy", "concat") else hidden_size
        self.dec_hidden = dec_hidden
        if bridge == "copy" and dec_hidden != self.src_dim:
            raise ValueError("copy bridge requires decoder size == encoder output size")
        if bridge == "concat" and dec_hidden != self.src_dim:
            raise ValueError("concat bridge requires decoder size == 2x encoder size")
        if attention == "dot" and dec_hidden != self.src_dim:
            raise ValueError(
                f"dot attention requires matching sizes, got source encoding "
                f"{self.src_dim} and decoder {dec_hidden}")

        self.M_f = Parameter("M_f", embedding_init(rng, embed_size, len(src_vocab)))
        self.M_e = Parameter("M_e", embedding_init(rng, embed_size, len(tgt_vocab)))
        self.enc_fwd = StackedRNN(cell, embed_size, hidden_size, layers, rng,
                                  name="enc_fwd")
        self.enc_bwd = (StackedRNN(cell, embed_size, hidden_size, layers, rng,
                                   name="enc_bwd")
                        if encoder == "bidirectional" else None)
        dec_input = embed_size + (self.src_dim if attention != "none" else 0)
        self.dec = StackedRNN(cell, dec_input, dec_hidden, layers, rng, name="dec")

        out_input = dec_hidden + (self.src_dim if attention != "none" else 0)
        self.W_hs = Parameter("W_hs", glorot(rng, len(tgt_vocab), out_input))
        self.b_s = Parameter("b_s", np.zeros((len(tgt_vocab), 1)))

        self.bridge_params = []
        if bridge == "tanh":
            self.W_bridge_fwd = Parameter("W_bridge_fwd",
                                          glorot(rng, dec_hidden, hidden_size))
            self.bridge_params = [self.W_bridge_fwd]
            if encoder == "bidirectional":
                self.W_bridge_bwd = Parameter("W_bridge_bwd",
                                              glorot(rng, dec_hidden, hidden_size))
                self.bridge_params.append(self.W_bridge_bwd)
            self.b_bridge = Parameter("b_bridge", np.zeros((dec_hidden, 1)))
            self.bridge_params.append(self.b_bridge)

        self.attn_params = []
        if attention == "bilinear":
            self.W_a = Parameter("W_a", glorot(rng, self.src_dim, dec_hidden))
            self.attn_params = [self.W_a]
        elif attention == "mlp":
            k = attn_hidden or hidden_size
            # one weight matrix over [decoder hidden; source column], stored as
            # its two partitions, plus the output projection vector
            self.W_a1_dec = Parameter("W_a1_dec", glorot(rng, k, dec_hidden))
            self.W_a1_src = Parameter("W_a1_src", glorot(rng, k, self.src_dim))
            self.w_a2 = Parameter("w_a2", glorot(rng, k, 1))
            self.attn_params = [self.W_a1_dec, self.W_a1_src, self.w_a2]

    def parameters(self):
        params = [self.M_f, self.M_e] + self.enc_fwd.parameters()
        if self.enc_bwd is not None:
            params += self.enc_bwd.parameters()
        params += self.dec.parameters() + [self.W_hs, self.b_s]
        params += self.bridge_params + self.attn_params
        return params

    # ---- encoding ----------------------------------------------------------

    def _run_direction(self, g: Graph, stack: StackedRNN, ids, reverse: bool):
        """Top-layer outputs per word position plus the stack's final states."""
        states = stack.initial_states(g)
        outputs: list[Node | None] = [None] * len(ids)
        order = range(len(ids) - 1, -1, -1) if reverse else range(len(ids))
        for t in order:
            x = g.lookup_column(g.param(self.M_f), ids[t])
            out, states = stack.step(g, x, states)
            outputs[t] = out
        return outputs, states

    def _encode_nodes(self, g: Graph, source_ids):
        """Build encoder nodes; returns (H node, decoder initial layer states)."""
        ids = list(source_ids)
        if not ids:
            raise ValueError("empty source sentence")
        direction = self.encoder_direction
        if direction == "forward":
            outputs, final_states = self._run_direction(g, self.enc_fwd, ids, False)
            final_fwd, final_bwd = final_states[-1].h, None
        elif direction == "reverse":
            outputs, final_states = self._run_direction(g, self.enc_fwd, ids, True)
            final_fwd, final_bwd = final_states[-1].h, None
        else:
            fwd_out, fwd_states = self._run_direction(g, self.enc_fwd, ids, False)
            bwd_out, bwd_states = self._run_direction(g, self.enc_bwd, ids, True)
            outputs = [g.concat_rows(b, f) for b, f in zip(bwd_out, fwd_out)]
            final_fwd, final_bwd = fwd_states[-1].h, bwd_states[-1].h

        H = g.concat_cols(*outputs) if len(outputs) > 1 else outputs[0]

        if self.bridge == "copy":
            h0 = final_fwd
        elif self.bridge == "concat":
            h0 = g.concat_rows(final_bwd, final_fwd)
        else:
            pre = g.matmul(g.param(self.W_bridge_fwd), final_fwd)
            if final_bwd is not None:
                pre = g.add(pre, g.matmul(g.param(self.W_bridge_bwd), final_bwd))
            h0 = g.tanh(g.add(pre, g.param(self.b_bridge)))

        zeros = np.zeros((self.dec_hidden, 1))
        init = []
        for i, cell in enumerate(self.dec.cells):
            h = h0 if i == 0 else g.input(zeros)
            c = g.input(zeros) if cell.has_cell else None
            init.append(RecurrentState(h=h, c=c))
        return H, init

    def encode(self, source_ids) -> SourceEncoding:
        """Run the encoder and freeze the per-word encodings as numbers."""
        g = Graph()
        H, init = self._encode_nodes(g, source_ids)
        g.forward()
        layers = [(st.h.value.copy(), None if st.c is None else st.c.value.copy())
                  for st in init]
        return SourceEncoding(H=H.value.copy(), init_layers=layers,
                              source_ids=list(source_ids))

    # ---- attention ---------------------------------------------------------

    def _attention_scores(self, g: Graph, H: Node, h_dec: Node) -> Node:
        """Score every source column against the decoder state, batched over
        the whole encoding matrix; result is one column of |F| scores."""
        if self.attention == "dot":
            return g.matmul(g.transpose(H), h_dec)
        if self.attention == "bilinear":
            return g.matmul(g.transpose(H),
                            g.matmul(g.param(self.W_a), h_dec))
        pre = g.add(g.matmul(g.param(self.W_a1_dec), h_dec),
                    g.matmul(g.param(self.W_a1_src), H))
        return g.transpose(g.matmul(g.transpose(g.param(self.w_a2)), g.tanh(pre)))

    def attention_scores_per_column(self, g: Graph, H_cols, h_dec: Node) -> Node:
        """Reference one-column-at-a-time scoring used to validate the batched
        form; concatenates |F| scalar scores."""
        scores = []
        for col in H_cols:
            if self.attention == "dot":
                scores.append(g.sum(g.cmult(col, h_dec)))
            elif self.attention == "bilinear":
                scores.append(g.sum(g.cmult(col, g.matmul(g.param(self.W_a), h_dec))))
            else:
                pre = g.add(g.matmul(g.param(self.W_a1_dec), h_dec),
                            g.matmul(g.param(self.W_a1_src), col))
                scores.append(g.sum(g.cmult(g.param(self.w_a2), g.tanh(pre))))
        return g.concat_rows(*scores) if len(scores) > 1 else scores[0]

    # ---- decoding ----------------------------------------------------------

    def _step_nodes(self, g: Graph, H: Node | None, prev_id: int, states,
                    context: Node | None):
        """One decoder step; returns (score node, new states, context, alpha)."""
        x = g.lookup_column(g.param(self.M_e), prev_id)
        if self.attention != "none":
            x = g.concat_rows(x, context)
        out, states = self.dec.step(g, x, states)
        if self.attention != "none":
            alpha = g.softmax(self._attention_scores(g, H, out))
            new_context = g.matmul(H, alpha)
            s = g.add(g.matmul(g.param(self.W_hs), g.concat_rows(out, new_context)),
                      g.param(self.b_s))
            return s, states, new_context, alpha
        s = g.add(g.matmul(g.param(self.W_hs), out), g.param(self.b_s))
        return s, states, None, None

    def start(self, source_ids) -> EncDecState:
        if source_ids is None:
            raise ValueError("encoder-decoder requires a source sentence")
        encoding = self.encode(source_ids)
        context = (np.zeros((self.src_dim, 1)) if self.attention != "none" else None)
        return EncDecState(encoding=encoding, layers=encoding.init_layers,
                           context=context)

    def step(self, state: EncDecState, prev_id: int):
        """Predictor protocol: returns (p over target vocab, new state, alpha)."""
        g = Graph()
        H = g.input(state.encoding.H) if self.attention != "none" else None
        layer_nodes = [RecurrentState(h=g.input(h),
                                      c=None if c is None else g.input(c))
                       for h, c in state.layers]
        context = g.input(state.context) if state.context is not None else None
        s, new_layers, new_context, alpha = self._step_nodes(
            g, H, prev_id, layer_nodes, context)
        p = g.softmax(s)
        g.forward()
        new_state = EncDecState(
            encoding=state.encoding,
            layers=[(st.h.value.copy(), None if st.c is None else st.c.value.copy())
                    for st in new_layers],
            context=None if new_context is None else new_context.value.copy())
        alpha_value = None if alpha is None else alpha.value[:, 0].copy()
        return p.value[:, 0], new_state, alpha_value

    def decode_step(self, encoding: SourceEncoding, prev_id: int, state, context):
        """Single exposed decode step over a frozen encoding.

        ``state``/``context`` are the numpy layer states and previous context
        vector (pass ``encoding.init_layers`` and zeros at t=1). Returns
        (p, new_state, new_context, alpha).
        """
        wrapped = EncDecState(encoding=encoding, layers=state, context=context)
        p, new, alpha = self.step(wrapped, prev_id)
        return p, new.layers, new.context, alpha

    # ---- training / scoring -------------------------------------------------

    def loss_graph(self, source_ids, target_ids) -> Graph:
        """Unrolled NLL graph of an EOS-terminated target given the source."""
        g = Graph()
        H, states = self._encode_nodes(g, source_ids)
        context = (g.input(np.zeros((self.src_dim, 1)))
                   if self.attention != "none" else None)
        losses = []
        prev = BOS_ID
        for target in target_ids:
            s, states, context, _ = self._step_nodes(g, H, prev, states, context)
            losses.append(g.pick_neg_log_softmax(s, target))
            prev = target
        total = g.concat_cols(*losses) if len(losses) > 1 else losses[0]
        g.sum(total)
        return g

    def sentence_loss(self, source_ids, target_ids) -> float:
        g = self.loss_graph(source_ids, target_ids)
        return float(g.forward()[0, 0])

    def score_pair(self, src_tokens, tgt_tokens):
        """(log-prob, word count, unk count, unk log portion) for surface pairs."""
        f = encode(self.src_vocab, src_tokens)
        e = encode(self.tgt_vocab, tgt_tokens, append_eos=True)
        logp = -self.sentence_loss(f, e)
        unk_count = sum(1 for i in e if i == UNK_ID)
        unk_logp = -unk_count * math.log(self.tgt_vocab.v_all)
        return logp + unk_logp, len(e), unk_count, unk_logp

    @property
    def vocab(self):
        return self.tgt_vocab


class Ensemble:
    """Average the per-step distributions of several decoders.

    Every member threads its own state; all members must share one target
    vocabulary.
    """

    def __init__(self, models):
        if not models:
            raise ValueError("empty ensemble")
        first = models[0].vocab
        for m in models[1:]:
            if m.vocab.tokens != first.tokens:
                raise ValueError("ensemble members must share the target vocabulary")
        self.models = list(models)

    @property
    def vocab(self):
        return self.models[0].vocab

    def start(self, source_ids=None):
        return tuple(m.start(source_ids) for m in self.models)

    def step(self, state, prev_id: int):
        total = None
        new_states = []
        alpha = None
        for model, st in zip(self.models, state):
            p, new, a = model.step(st, prev_id)
            total = p if total is None else total + p
            new_states.append(new)
            if alpha is None and a is not None:
                alpha = a       # unknown replacement follows the first member
        return total / len(self.models), tuple(new_states), alpha

    def score_pair(self, src_tokens, tgt_tokens):
        f = encode(self.models[0].src_vocab, src_tokens)
        e = encode(self.vocab, tgt_tokens, append_eos=True)
        state = self.start(f)
        logp = 0.0
        prev = BOS_ID
        for target in e:
            p, state, _ = self.step(state, prev)
            logp += math.log(p[target])
            prev = target
        unk_count = sum(1 for i in e if i == UNK_ID)
        unk_logp = -unk_count * math.log(self.vocab.v_all)
        return logp + unk_logp, len(e), unk_count, unk_logp


def ensemble_predict(models, state, prev_id: int):
    """One averaged prediction step; see :class:`Ensemble` for state handling."""
    return Ensemble(models).step(state, prev_id)


def train_encdec(model: EncDecModel, pairs, optimizer: Optimizer, epochs: int,
                 dev_pairs=None, rng=None, log=None, shuffle: bool = True):
    """Per-sentence training over (source_ids, target_ids) pairs.

    Returns per-epoch dev log-likelihood history; parameters end at the
    best-dev snapshot when a dev set is supplied.
    """
    rng = rng or np.random.default_rng(0)
    pairs = [(list(f), list(e)) for f, e in pairs]
    tracker = EpochTracker(optimizer)
    history = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(pairs)) if shuffle else range(len(pairs))
        train_loss = 0.0
        for i in order:
            f, e = pairs[i]
            g = model.loss_graph(f, e)
            try:
                value = float(g.forward()[0, 0])
            except NonFiniteError as exc:
                raise TrainingDivergence(str(exc)) from exc
            train_loss += value
            g.backward()
            optimizer.step()
            optimizer.zero_grad()
        if dev_pairs is not None:
            try:
                dev_ll = -sum(model.sentence_loss(f, e) for f, e in dev_pairs)
            except NonFiniteError as exc:
                raise TrainingDivergence(str(exc)) from exc
        else:
            dev_ll = -train_loss
        history.append(dev_ll)
        if log is not None:
            log(epoch, train_loss, dev_ll)
        tracker.report(dev_ll)
    tracker.restore_best()
    return history

"""Base navigation agent: instruction encoder and attentive step decoder.

The encoder is a single-layer LSTM over learned token embeddings. The
decoder keeps a hidden memory across environment moves; each move it
attends over the instruction encoding with the previous hidden state and
feeds [observation; attended context] through its own LSTM cell.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T


class AgentError(ValueError):
    pass


@dataclass
class LstmParams:
    """One LSTM cell; separate affine maps per gate."""
    wi: T.Tensor
    ui: T.Tensor
    bi: T.Tensor
    wf: T.Tensor
    uf: T.Tensor
    bf: T.Tensor
    wo: T.Tensor
    uo: T.Tensor
    bo: T.Tensor
    wg: T.Tensor
    ug: T.Tensor
    bg: T.Tensor

    def named(self, prefix: str) -> dict[str, T.Tensor]:
        return {f"{prefix}.{k}": getattr(self, k) for k in
                ("wi", "ui", "bi", "wf", "uf", "bf",
                 "wo", "uo", "bo", "wg", "ug", "bg")}


def lstm_cell(x: T.Tensor, h: T.Tensor, c: T.Tensor,
              p: LstmParams) -> tuple[T.Tensor, T.Tensor]:
    def gate(w, u, b, squash):
        return squash(T.add(T.add(T.matmul(x, w), T.matmul(h, u)), b))

    i = gate(p.wi, p.ui, p.bi, T.sigmoid)
    f = gate(p.wf, p.uf, p.bf, T.sigmoid)
    o = gate(p.wo, p.uo, p.bo, T.sigmoid)
    g = gate(p.wg, p.ug, p.bg, T.tanh)
    c_new = T.add(T.mul(f, c), T.mul(i, g))
    return T.mul(o, T.tanh(c_new)), c_new


@dataclass
class AgentParams:
    embed: T.Tensor          # (token vocab, d_emb)
    encoder: LstmParams      # d_emb -> d_h
    attn_w: T.Tensor         # (d_h, d_h)
    decoder: LstmParams      # d_obs + d_h -> d_h

    @property
    def hidden_dim(self) -> int:
        return self.attn_w.data.shape[0]

    def named(self, prefix: str = "agent") -> dict[str, T.Tensor]:
        out = {f"{prefix}.embed": self.embed, f"{prefix}.attn_w": self.attn_w}
        out.update(self.encoder.named(f"{prefix}.enc"))
        out.update(self.decoder.named(f"{prefix}.dec"))
        return out


@dataclass
class InstructionEncoding:
    c: T.Tensor              # (|tokens|, d_h)
    final_h: T.Tensor        # (1, d_h)
    final_cell: T.Tensor     # (1, d_h)


@dataclass
class AgentState:
    h: T.Tensor              # (1, d_h)
    cell: T.Tensor           # (1, d_h)
    env_node: int
    trajectory: list[int]
    steps: int = 0

    def moved(self, env_node: int) -> "AgentState":
        return replace(self, env_node=env_node,
                       trajectory=self.trajectory + [env_node])


def encode_instruction(tokens: list[int], params: AgentParams) -> InstructionEncoding:
    if not tokens:
        raise AgentError("empty instruction")
    vocab = params.embed.data.shape[0]
    bad = [t for t in tokens if not 0 <= t < vocab]
    if bad:
        raise AgentError(f"token id {bad[0]} outside vocab of {vocab}")
    d_h = params.hidden_dim
    h = T.Tensor(np.zeros((1, d_h)))
    c = T.Tensor(np.zeros((1, d_h)))
    rows = []
    emb = T.embedding_lookup(params.embed, np.asarray(tokens, dtype=np.int64))
    for i in range(len(tokens)):
        x = T.embedding_lookup(emb, np.array([i]))
        h, c = lstm_cell(x, h, c, params.encoder)
        rows.append(h)
    return InstructionEncoding(c=T.concat(rows, axis=0), final_h=h, final_cell=c)


def initial_state(enc: InstructionEncoding, env_node: int) -> AgentState:
    """Decoder memory starts from the encoder's final states."""
    return AgentState(h=enc.final_h, cell=enc.final_cell,
                      env_node=env_node, trajectory=[env_node])


def attend(h: T.Tensor, enc: InstructionEncoding,
           params: AgentParams) -> tuple[T.Tensor, T.Tensor]:
    """Instruction attention: weights over tokens and the context row."""
    scores = T.matmul(T.matmul(h, params.attn_w), T.transpose(enc.c))
    weights = T.softmax(scores)
    return weights, T.matmul(weights, enc.c)


def decoder_step(state: AgentState, obs_feature: np.ndarray,
                 enc: InstructionEncoding, params: AgentParams) -> AgentState:
    d_h = params.hidden_dim
    obs = np.asarray(obs_feature, dtype=np.float64).reshape(1, -1)
    expect = params.decoder.wi.data.shape[0]
    if obs.shape[1] + d_h != expect:
        raise AgentError(
            f"observation dim {obs.shape[1]} + context {d_h} does not match "
            f"decoder input {expect}")
    _, context = attend(state.h, enc, params)
    x = T.concat([T.Tensor(obs), context], axis=-1)
    h, cell = lstm_cell(x, state.h, state.cell, params.decoder)
    return replace(state, h=h, cell=cell, steps=state.steps + 1)

"""Sentence encoding: learned embeddings plus a bidirectional gated recurrent
encoder. Each word ends up represented by the concatenation of its forward and
backward hidden states; the global sentence vector is the mean of those rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, InputError

PAD_INDEX = 0


@dataclass
class Vocabulary:
    """Dense token-to-index map with PAD pinned to index 0."""

    token_to_index: dict[str, int]

    def __post_init__(self):
        indices = sorted(self.token_to_index.values())
        if indices != list(range(len(indices))):
            raise ConfigError("vocabulary indices must be dense in [0, size)")
        pad = [t for t, i in self.token_to_index.items() if i == PAD_INDEX]
        if not pad:
            raise ConfigError("vocabulary must map some token to the PAD index 0")

    @property
    def size(self) -> int:
        return len(self.token_to_index)

    def encode(self, tokens: list[str]) -> list[int]:
        try:
            return [self.token_to_index[t] for t in tokens]
        except KeyError as e:
            raise InputError(f"token {e.args[0]!r} not in vocabulary") from None

    @classmethod
    def for_prototypes(cls, num_prototypes: int) -> "Vocabulary":
        mapping = {"<pad>": PAD_INDEX}
        for k in range(num_prototypes):
            mapping[f"p{k:02d}"] = k + 1
        return cls(mapping)


@dataclass
class SentenceEncoding:
    word_states: Tensor   # [N, d_s]
    global_state: Tensor  # [d_s], mean of the word state rows


class _GruDirection:
    """One recurrence direction with fused (reset, update, candidate) gates."""

    def __init__(self, prefix: str, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.hidden_dim = hidden_dim
        scale = 1.0 / np.sqrt(hidden_dim)
        self.w_x = Tensor(rng.uniform(-scale, scale, (3 * hidden_dim, input_dim)),
                          requires_grad=True, name=f"{prefix}.w_x")
        self.w_h = Tensor(rng.uniform(-scale, scale, (3 * hidden_dim, hidden_dim)),
                          requires_grad=True, name=f"{prefix}.w_h")
        self.b = Tensor(np.zeros(3 * hidden_dim), requires_grad=True, name=f"{prefix}.b")

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(p.name, p) for p in (self.w_x, self.w_h, self.b)]

    def run(self, embedded: Tensor, order: list[int]) -> list[Tensor]:
        """Consume embedded rows in `order`; return per-position [1, H] states
        indexed by original position."""
        h = self.hidden_dim
        gates_x = ad.add(ad.matmul(embedded, ad.transpose(self.w_x)), self.b)  # [N, 3H]
        state = ad.zeros((1, h))
        states: list[Tensor | None] = [None] * embedded.shape[0]
        for n in order:
            gx = ad.narrow(gates_x, 0, n, 1)                       # [1, 3H]
            gh = ad.matmul(state, ad.transpose(self.w_h))          # [1, 3H]
            r = ad.sigmoid(ad.add(ad.narrow(gx, 1, 0, h), ad.narrow(gh, 1, 0, h)))
            z = ad.sigmoid(ad.add(ad.narrow(gx, 1, h, h), ad.narrow(gh, 1, h, h)))
            cand = ad.tanh(
                ad.add(ad.narrow(gx, 1, 2 * h, h), ad.mul(r, ad.narrow(gh, 1, 2 * h, h)))
            )
            # h' = (1 - z)*cand + z*h
            state = ad.add(ad.mul(ad.rsub(z, 1.0), cand), ad.mul(z, state))
            states[n] = state
        return states  # type: ignore[return-value]


class TextEncoder:
    def __init__(self, vocab_size: int, d_s: int, max_sentence_length: int,
                 rng: np.random.Generator, prefix: str = "text"):
        if d_s % 2 != 0:
            raise ConfigError(f"d_s must be even, got {d_s}")
        self.vocab_size = vocab_size
        self.d_s = d_s
        self.max_sentence_length = max_sentence_length
        scale = 1.0 / np.sqrt(d_s)
        self.embedding = Tensor(rng.uniform(-scale, scale, (vocab_size, d_s)),
                                requires_grad=True, name=f"{prefix}.embedding")
        self.forward_cell = _GruDirection(f"{prefix}.fwd", d_s, d_s // 2, rng)
        self.backward_cell = _GruDirection(f"{prefix}.bwd", d_s, d_s // 2, rng)

    def parameters(self) -> list[tuple[str, Tensor]]:
        params = [(self.embedding.name, self.embedding)]
        params += self.forward_cell.parameters()
        params += self.backward_cell.parameters()
        return params

    def encode(self, tokens: list[int]) -> SentenceEncoding:
        n = len(tokens)
        if n == 0:
            raise InputError("cannot encode an empty token list")
        if n > self.max_sentence_length:
            raise InputError(f"sentence length {n} exceeds maximum {self.max_sentence_length}")
        for t in tokens:
            if not (0 <= t < self.vocab_size):
                raise InputError(f"token index {t} outside vocabulary of size {self.vocab_size}")
            if t == PAD_INDEX:
                raise InputError("PAD tokens are never fed to the encoder")

        embedded = ad.gather_rows(self.embedding, tokens)  # [N, d_s]
        fwd = self.forward_cell.run(embedded, list(range(n)))
        bwd = self.backward_cell.run(embedded, list(range(n - 1, -1, -1)))
        rows = [ad.concat([fwd[i], bwd[i]], axis=1) for i in range(n)]
        word_states = rows[0] if n == 1 else ad.concat(rows, axis=0)  # [N, d_s]
        global_state = ad.mean(word_states, axis=0)                   # [d_s]
        return SentenceEncoding(word_states=word_states, global_state=global_state)

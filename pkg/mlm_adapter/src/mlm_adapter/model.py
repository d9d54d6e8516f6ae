"""A small word-level transformer masked language model.

The model predicts the token at a masked position from the full sentence
context (a transformer encoder, no causal mask).  It is intentionally
tiny: whitespace tokens, a few thousand parameters per layer, pretrained
on a factual-sentence corpus by ``python -m mlm_adapter.train`` and
shipped as a checkpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import torch
import torch.nn as nn

MASK_TOKEN = "[MASK]"
UNK_TOKEN = "[UNK]"
PAD_TOKEN = "[PAD]"


@dataclass
class ModelConfig:
    vocab_size: int
    max_len: int = 48
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    dropout: float = 0.1


class WordVocab:
    """Whitespace-token vocabulary with mask/unknown/padding specials."""

    def __init__(self, tokens: list[str]):
        specials = [PAD_TOKEN, UNK_TOKEN, MASK_TOKEN]
        ordinary = sorted(set(tokens) - set(specials))
        self.tokens = specials + ordinary
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.pad_id = self.index[PAD_TOKEN]
        self.unk_id = self.index[UNK_TOKEN]
        self.mask_id = self.index[MASK_TOKEN]

    def __len__(self):
        return len(self.tokens)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.index.get(t, self.unk_id) for t in tokens]


class MaskedTokenModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.embed = nn.Embedding(config.vocab_size, config.d_model)
        self.pos = nn.Embedding(config.max_len, config.d_model)
        layer = nn.TransformerEncoderLayer(
            d_model=config.d_model,
            nhead=config.n_heads,
            dim_feedforward=config.d_ff,
            dropout=config.dropout,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=config.n_layers)
        self.out = nn.Linear(config.d_model, config.vocab_size)
        self.scale = math.sqrt(config.d_model)

    def forward(self, token_ids: torch.Tensor,
                pad_mask: torch.Tensor | None = None) -> torch.Tensor:
        """token_ids: (batch, seq) -> logits (batch, seq, vocab)."""
        positions = torch.arange(token_ids.shape[1], device=token_ids.device)
        hidden = self.embed(token_ids) * self.scale + self.pos(positions)
        hidden = self.encoder(hidden, src_key_padding_mask=pad_mask)
        return self.out(hidden)

    @torch.no_grad()
    def masked_log_probs(self, vocab: WordVocab, tokens: list[str],
                         mask_index: int) -> torch.Tensor:
        """Log-softmax over the model vocabulary at the masked position."""
        if not (0 <= mask_index < len(tokens)):
            raise ValueError(f"mask_index {mask_index} out of range")
        window = list(tokens)
        # clip long inputs to a window that keeps the masked position
        if len(window) > self.config.max_len:
            start = max(0, min(mask_index - self.config.max_len // 2,
                               len(window) - self.config.max_len))
            window = window[start:start + self.config.max_len]
            mask_index -= start
        ids = vocab.encode(window)
        ids[mask_index] = vocab.mask_id
        batch = torch.tensor([ids], dtype=torch.long)
        logits = self.forward(batch)[0, mask_index]
        return torch.log_softmax(logits, dim=-1)


def save_checkpoint(path, model: MaskedTokenModel, vocab: WordVocab) -> None:
    torch.save({
        "config": asdict(model.config),
        "vocab_tokens": vocab.tokens,
        "state_dict": model.state_dict(),
    }, path)


def load_checkpoint(path) -> tuple[MaskedTokenModel, WordVocab]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    vocab = WordVocab(payload["vocab_tokens"])
    # WordVocab re-sorts; the stored order must round-trip exactly
    if vocab.tokens != payload["vocab_tokens"]:
        vocab.tokens = payload["vocab_tokens"]
        vocab.index = {t: i for i, t in enumerate(vocab.tokens)}
        vocab.pad_id = vocab.index[PAD_TOKEN]
        vocab.unk_id = vocab.index[UNK_TOKEN]
        vocab.mask_id = vocab.index[MASK_TOKEN]
    model = MaskedTokenModel(ModelConfig(**payload["config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, vocab

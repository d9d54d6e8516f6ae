"""Pretrain the masked token model on a sentence corpus.

    python -m mlm_adapter.train --corpus training/corpus.txt \
        --out checkpoints/tiny_mlm.pt --steps 2000 --seed 0

Each step samples a batch of sentences and masks one random position per
sentence; the loss is cross-entropy on the masked token only.
"""

from __future__ import annotations

import argparse
import random

import torch
import torch.nn as nn

from .model import MaskedTokenModel, ModelConfig, WordVocab, save_checkpoint


def load_sentences(path) -> list[list[str]]:
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tokens = line.split()
            if tokens:
                sentences.append(tokens)
    return sentences


def train(corpus_path, out_path, steps=2000, batch_size=32, lr=2e-3, seed=0):
    rng = random.Random(seed)
    torch.manual_seed(seed)
    sentences = load_sentences(corpus_path)
    if not sentences:
        raise SystemExit(f"no sentences in {corpus_path}")
    vocab = WordVocab([t for s in sentences for t in s])
    config = ModelConfig(vocab_size=len(vocab))
    model = MaskedTokenModel(config)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()

    for step in range(1, steps + 1):
        batch = [rng.choice(sentences) for _ in range(batch_size)]
        max_len = min(config.max_len, max(len(s) for s in batch))
        ids = torch.full((batch_size, max_len), vocab.pad_id, dtype=torch.long)
        pad_mask = torch.ones((batch_size, max_len), dtype=torch.bool)
        targets = torch.zeros(batch_size, dtype=torch.long)
        positions = torch.zeros(batch_size, dtype=torch.long)
        for i, sentence in enumerate(batch):
            sentence = sentence[:max_len]
            encoded = vocab.encode(sentence)
            ids[i, :len(encoded)] = torch.tensor(encoded)
            pad_mask[i, :len(encoded)] = False
            mask_at = rng.randrange(len(encoded))
            targets[i] = encoded[mask_at]
            positions[i] = mask_at
            ids[i, mask_at] = vocab.mask_id
        logits = model(ids, pad_mask=pad_mask)
        picked = logits[torch.arange(batch_size), positions]
        loss = loss_fn(picked, targets)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        if step % 200 == 0 or step == 1:
            print(f"step {step:5d}  loss {loss.item():.4f}")

    model.eval()
    save_checkpoint(out_path, model, vocab)
    print(f"saved {out_path} (vocab {len(vocab)}, "
          f"{sum(p.numel() for p in model.parameters())} params)")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--corpus", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--lr", type=float, default=2e-3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    train(args.corpus, args.out, steps=args.steps, batch_size=args.batch_size,
          lr=args.lr, seed=args.seed)


if __name__ == "__main__":
    main()

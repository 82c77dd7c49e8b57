"""Greedy search, beam search and nucleus sampling on a hand-sized model.

The "model" is a table of next-token distributions, so every decoder can be
compared with the exhaustive optimum over all sequences.
"""
import numpy as np

from catdesc.decoding import DecodeConfig, beam_search, exhaustive_search, greedy_decode, nucleus_sample, table_step_fn

rng = np.random.default_rng(7)
vocab, length = 4, 4
step = table_step_fn(rng.dirichlet(np.full(vocab, 0.5), size=(length, vocab + 1)))

best = exhaustive_search(step, length, eos_id=0)
print(f"exhaustive optimum      {best.tokens}  logp {best.logprob:.4f}")
g = greedy_decode(step, DecodeConfig("greedy", max_len=length, eos_id=0))
print(f"greedy                  {g.tokens}  logp {g.logprob:.4f}")
for k in (1, 2, 4, 16):
    b, _ = beam_search(step, DecodeConfig("beam", beam_width=k, max_len=length, eos_id=0))
    print(f"beam k={k:<2}               {b.tokens}  logp {b.logprob:.4f}")

print("\nnucleus samples (p=0.9):")
cfg = DecodeConfig("nucleus", top_p=0.9, max_len=length, eos_id=0)
for i in range(5):
    h = nucleus_sample(step, cfg, np.random.default_rng(i))
    print(f"  seed {i}: {h.tokens}  logp {h.logprob:.4f}")

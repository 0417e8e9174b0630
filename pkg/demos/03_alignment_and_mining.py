"""Cross-modal alignment and hard-negative mining, step by step.

Audio and video go through per-modality projection heads into a shared
space. The alignment loss pulls same-emotion pairs together across
modalities; the miner then reads the similarity matrices and picks, for
each anchor, the most confusable clip with a different label. Those picks
feed the matched/mismatched pair classifier during training.
"""

import numpy as np

from foalnet import (
    AlignmentConfig,
    FoalNet,
    FoalNetConfig,
    Tensor,
    alignment_loss,
    emotion_match_matrix,
    mine_hard_negatives,
    similarity_matrices,
)

labels = np.array([0, 1, 0, 2, 1, 2])
match = emotion_match_matrix(labels)
print("labels:", labels.tolist())
print("match matrix (1 where labels agree):")
print(match.astype(int))

cfg = FoalNetConfig(d_a=12, d_v=10, classes=3, heads=2, fusion_layers=1,
                    attn_dropout=0.0, proj_hidden=16, proj_dropout=0.0,
                    align=AlignmentConfig(proj_dim=8), seed=4)
model = FoalNet(cfg).eval()

rng = np.random.default_rng(7)
z_a = Tensor(rng.normal(size=(6, 5, 12)))   # [N, T, d_a] audio embeddings
z_v = Tensor(rng.normal(size=(6, 3, 10)))   # [N, F, d_v] video embeddings

# project pools over time, maps through each modality's MLP, and
# l2-normalizes, so similarities are scaled cosines
e_a, e_v = model.project(z_a, z_v)
c_a2v, c_v2a = similarity_matrices(e_a, e_v, cfg.align)
print("\naudio-to-video similarities (rows = audio anchors):")
print(np.round(c_a2v.data, 2))

# one direction is exactly the transpose of the other
print("c_v2a is the transpose:", bool(np.array_equal(c_v2a.data, c_a2v.data.T)))

loss = alignment_loss(c_a2v, c_v2a, match, cfg.align)
print(f"\nalignment loss (untrained): {loss.item():.4f}")

# a few gradient steps on the projection heads pull matching pairs
# together; watch the loss fall
params = [p for name, p in model.named_parameters() if name.startswith("proj_")]
for step in range(60):
    model.zero_grad()
    e_a, e_v = model.project(z_a, z_v)
    c1, c2 = similarity_matrices(e_a, e_v, cfg.align)
    out = alignment_loss(c1, c2, match, cfg.align)
    out.backward()
    for p in params:
        if p.grad is not None:
            p.data = p.data - 0.5 * p.grad
    if step % 20 == 19:
        print(f"  step {step + 1}: {out.item():.4f}")

# mining happens outside the autodiff graph on the raw similarity numbers.
# For each anchor it masks out same-label columns and takes the argmax:
# the wrong-label clip the model currently finds most similar.
e_a, e_v = model.project(z_a, z_v)
c1, c2 = similarity_matrices(e_a, e_v, cfg.align)
picks = mine_hard_negatives(c1.data, c2.data, match)

print("\nhard negatives after alignment training:")
for i in range(6):
    j = picks.id_a2v[i]
    print(f"  audio {i} (label {labels[i]}) -> video {j} "
          f"(label {labels[j]}, sim {c1.data[i, j]:+.2f})")
print("every pick has a different label:",
      all(labels[picks.id_a2v[i]] != labels[i] for i in range(6)))

"""Look inside a grown tree.

Grows the tree on a noisy triangle, writes the leaf map as a 16-bit PNG (the
pixel value is the leaf id) and prints, for the largest leaves, their size,
purity against the true regions and the half-spaces that carve them out.

    python3 demos/partition_map.py --out /tmp/leaves.png
"""

import argparse

import numpy as np

from ortsmooth import SmootherConfig, add_noise, grow_tree, render, triangle_spec, write_image
from ortsmooth.cli import partition_image
from ortsmooth.synth import NoiseModel, region_labels

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--n", type=int, default=100)
parser.add_argument("--sigma", type=float, default=0.2)
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--out", default="leaves.png")
args = parser.parse_args()

spec = triangle_spec()
truth = render(spec, (args.n, args.n))
noisy = add_noise(truth, NoiseModel(args.sigma, args.seed))
cfg = SmootherConfig(sigma=args.sigma).resolve(noisy)
part = grow_tree(noisy, cfg.tree)
write_image(partition_image(part.leaf_id, noisy.dims), args.out, depth=16)
print(f"{part.leaf_count} leaves (r_n {cfg.r_n:.2e}, min_leaf {cfg.min_leaf}) -> {args.out}")

labels = region_labels(spec, noisy.dims)
sizes = part.leaf_sizes()
for k in np.argsort(-sizes)[:5]:
    lab = labels[part.members(k)]
    purity = np.bincount(lab + 1).max() / lab.size
    mean = part.leaf_stats[k].mean
    print(f"\nleaf {k}: {sizes[k]} points, purity {purity:.1%}, mean {mean:.3f}")
    for rule, left in part.ancestors(k):
        a1, a2 = rule.alpha
        print(f"    {a1:+.3f} u {a2:+.3f} v {'<=' if left else '> '} {rule.c:.4f}")

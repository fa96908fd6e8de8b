#!/usr/bin/env python3
"""Generate the bundled mini-digits fixture: a 3-class, 16-feature CSV.

Class clouds are isotropic Gaussians around prototypes offset from a shared
base pattern along orthonormal random directions, clamped to the 0..16
intensity range of the classic digit datasets.  The classes are well
separated relative to the noise, so their indicator reward functions are
close to unrelated tasks; what keeps the problem from being trivial is the
exploration cost of the bandit itself.

Deterministic: same seed, same file.  The committed data/minidigits.csv was
produced by running this with no arguments.
"""

import argparse
import math
import random

DIM = 16
CLASSES = 3
ROWS_PER_CLASS = 200


def orthonormal_directions(rng, count, dim):
    """Random orthonormal vectors via Gram-Schmidt."""
    basis = []
    while len(basis) < count:
        v = [rng.gauss(0.0, 1.0) for _ in range(dim)]
        for u in basis:
            dot = sum(a * b for a, b in zip(v, u))
            v = [a - dot * b for a, b in zip(v, u)]
        norm = math.sqrt(sum(a * a for a in v))
        if norm > 1e-6:
            basis.append([a / norm for a in v])
    return basis


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/minidigits.csv")
    parser.add_argument("--seed", type=int, default=20240117)
    parser.add_argument("--separation", type=float, default=6.0,
                        help="prototype offset along each class direction")
    parser.add_argument("--noise-sd", type=float, default=1.2)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    base = [rng.uniform(2.0, 14.0) for _ in range(DIM)]
    directions = orthonormal_directions(rng, CLASSES, DIM)
    prototypes = [
        [b + args.separation * u for b, u in zip(base, direction)]
        for direction in directions
    ]

    rows = []
    for label, proto in enumerate(prototypes, start=1):
        for _ in range(ROWS_PER_CLASS):
            features = [
                min(16.0, max(0.0, rng.gauss(mean, args.noise_sd))) for mean in proto
            ]
            rows.append((label, features))
    rng.shuffle(rows)

    with open(args.out, "w", newline="\n") as out:
        out.write("label," + ",".join(f"f{j + 1}" for j in range(DIM)) + "\n")
        for label, features in rows:
            out.write(str(label) + "," + ",".join(f"{v:.1f}" for v in features) + "\n")
    print(f"wrote {args.out}: {len(rows)} rows, {CLASSES} classes, {DIM} features")


if __name__ == "__main__":
    main()

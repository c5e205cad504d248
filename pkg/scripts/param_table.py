#!/usr/bin/env python3
"""Print trainable-parameter counts for the standard model configurations.

Counts come from instantiating each model at its per-task default sizes
(classification: 50-dim embeddings, 256 hidden; regression: 300-dim
embeddings, 100 hidden) with the default 10,000-word vocabulary plus the
two reserved entries.
"""

import argparse

from numpy.random import default_rng

from hanst import models as md


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--vocab-size", type=int, default=10_002,
                        help="vocabulary entries including PAD and UNK")
    args = parser.parse_args()

    rows = []
    for task in ("classify", "regress"):
        for kind in md.MODEL_KINDS:
            tagsets = ("none",) if kind != "han" else ("none", "full")
            for tagset in tagsets:
                config = md.default_model_config(kind, task, args.vocab_size,
                                                 tagset=tagset)
                model = md.build_model(config, default_rng(0))
                label = kind if tagset == "none" else f"{kind}+tags"
                rows.append((task, label, md.count_parameters(model)))

    width = max(len(r[1]) for r in rows)
    print(f"{'task':<10}{'model':<{width + 2}}{'parameters':>12}")
    for task, label, count in rows:
        print(f"{task:<10}{label:<{width + 2}}{count:>12,}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

#!/usr/bin/env python3
"""Generate one of the built-in synthetic corpora as a JSONL file.

These corpora are small, fully seeded, and exist so the pipeline can be
exercised end to end without any external data. See hanst.synth for what
each one probes.
"""

import argparse

from hanst import synth
from hanst.corpus import save_corpus

GENERATORS = {
    "tag-probe": synth.tag_probe_corpus,
    "imbalanced": synth.imbalanced_corpus,
    "heterogeneous": synth.heterogeneous_length_corpus,
    "citations": synth.citation_corpus,
    "dual-label": synth.dual_label_corpus,
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("kind", choices=sorted(GENERATORS))
    parser.add_argument("out", help="output JSONL path")
    parser.add_argument("--n-docs", type=int, default=None,
                        help="document count (default: generator default)")
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed (default: generator default)")
    args = parser.parse_args()

    kwargs = {}
    if args.n_docs is not None:
        kwargs["n_docs"] = args.n_docs
    if args.seed is not None:
        kwargs["seed"] = args.seed
    docs = GENERATORS[args.kind](**kwargs)
    save_corpus(docs, args.out)
    n_train = sum(1 for d in docs if d.split == "train")
    print(f"wrote {len(docs)} documents ({n_train} train) to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

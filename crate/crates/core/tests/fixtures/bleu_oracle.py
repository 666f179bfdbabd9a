"""Reference sentence-level BLEU (orders 1-2) for the fixture file.

Clipped n-gram precision, add-one smoothing for an order with zero matches,
brevity penalty exp(1 - r/c) when the candidate is shorter, geometric mean.
Run: python3 bleu_oracle.py > bleu_oracle.tsv
"""
import math
import random
from collections import Counter

WORDS = "the a is of how far sun earth what distance between and to learn i can".split()


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(cand, ref):
    if not cand:
        return 0.0
    logs = []
    for n in (1, 2):
        c, r = ngrams(cand, n), ngrams(ref, n)
        total = sum(c.values())
        hits = sum(min(k, r[g]) for g, k in c.items())
        p = hits / total if hits else 1.0 / (total + 1)
        logs.append(math.log(p))
    bp = math.exp(1 - len(ref) / len(cand)) if len(cand) < len(ref) else 1.0
    return bp * math.exp(sum(logs) / 2)


def main():
    rng = random.Random(20240611)
    rows = [(["sun"], ["how", "far", "is", "sun"])]
    while len(rows) < 50:
        ref = [rng.choice(WORDS) for _ in range(rng.randint(1, 12))]
        if rng.random() < 0.5:
            cand = [w if rng.random() < 0.7 else rng.choice(WORDS) for w in ref]
            cut = rng.randint(1, len(cand))
            cand = cand[:cut] if rng.random() < 0.4 else cand
        else:
            cand = [rng.choice(WORDS) for _ in range(rng.randint(1, 12))]
        rows.append((cand, ref))
    for cand, ref in rows:
        print(f"{' '.join(cand)}\t{' '.join(ref)}\t{bleu(cand, ref)!r}")


if __name__ == "__main__":
    main()

"""Exact probability that the 3-gram (0, 1, 2) occurs in a uniform sequence.

KMP-automaton dynamic program; independent of the C++ sampler. Prints the
value frozen into the harness tests.
"""
from fractions import Fraction


def occurrence_probability(seq_len, vocab, pattern=(0, 1, 2)):
    k = len(pattern)

    def advance(state, token):
        s = list(pattern[:state]) + [token]
        for start in range(len(s) + 1):
            suffix = s[start:]
            if tuple(suffix) == tuple(pattern[: len(suffix)]):
                return len(suffix)
        return 0

    dist = {0: Fraction(1)}
    hit = Fraction(0)
    for _ in range(seq_len):
        nxt = {}
        for state, p in dist.items():
            for t in range(vocab):
                s2 = advance(state, t)
                q = p / vocab
                if s2 == k:
                    hit += q
                else:
                    nxt[s2] = nxt.get(s2, 0) + q
        dist = nxt
    return hit


if __name__ == "__main__":
    for n in (18, 19, 20, 21, 22):
        print(n, float(occurrence_probability(n, 3)))

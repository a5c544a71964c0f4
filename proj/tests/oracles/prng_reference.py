"""Independent reference for the portable RNG (SplitMix64 seeding xoshiro256**).

Prints the values frozen into tests/unit/test_prng.cpp.
"""
import math

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(seed):
    z = (seed + GOLDEN) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK


class Xoshiro:
    def __init__(self, master, key):
        x = master ^ splitmix64(key)
        self.s = []
        for _ in range(4):
            self.s.append(splitmix64(x))
            x = (x + GOLDEN) & MASK

    def next(self):
        s = self.s
        result = (rotl((s[1] * 5) & MASK, 7) * 9) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
        return result

    def uniform(self):
        return (self.next() >> 11) * 2.0 ** -53


if __name__ == "__main__":
    for seed in (0, 1, 42, 0xDEADBEEF, MASK):
        print(f"splitmix64({seed:#x}) = {splitmix64(seed):#018x}")
    for master, key in ((0, 0), (0, 1), (7, 3)):
        g = Xoshiro(master, key)
        print(f"stream({master},{key}) =", ", ".join(f"{g.next():#018x}" for _ in range(4)))
    g = Xoshiro(5, 9)
    u1, u2 = g.uniform(), g.uniform()
    rad = math.sqrt(-2.0 * math.log(u1))
    print("uniform(5,9) =", repr(u1), repr(u2))
    print("normal(5,9) =", repr(rad * math.cos(2 * math.pi * u2)), repr(rad * math.sin(2 * math.pi * u2)))
    print("sqrt(6/768) =", repr(math.sqrt(6 / 768)))

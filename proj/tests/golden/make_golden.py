"""Reference vectors for the seeded streams, computed independently of the C++ code.

Run from this directory: python3 make_golden.py > golden.json
"""
import json

MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def below(self, bound):
        limit = MASK - (MASK % bound)
        while True:
            x = self.next()
            if x < limit:
                return x % bound


def permutation(seed, n):
    rng = SplitMix64(seed)
    p = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        p[i], p[j] = p[j], p[i]
    return p


def message_hex(seed, nbits):
    rng = SplitMix64(seed)
    bits = []
    while len(bits) < nbits:
        w = rng.next()
        bits.extend((w >> (63 - k)) & 1 for k in range(64))
    bits = bits[:nbits]
    bits += [0] * (-len(bits) % 4)
    return "".join("%X" % int("".join(map(str, bits[i:i + 4])), 2) for i in range(0, len(bits), 4))


ORIGIN = "python reference in make_golden.py"

golden = {
    "splitmix64": [
        {"seed": s, "outputs": ["0x%016X" % v for v in (lambda r: [r.next() for _ in range(4)])(SplitMix64(s))],
         "origin": ORIGIN}
        for s in (0, 1, 0x9E3779B97F4A7C15)
    ],
    "permutations": [
        {"seed": "0x%016X" % s, "n": n, "perm": permutation(s, n), "origin": ORIGIN}
        for s, n in ((0x9E3779B97F4A7C15, 8), (0, 8), (42, 1), (42, 2), (7, 20), (0xDEADBEEF, 3072))
    ],
    "messages": [
        {"seed": "0x%016X" % s, "bits": b, "hex": message_hex(s, b), "origin": ORIGIN}
        for s, b in ((0, 30), (1, 64), (0x9E3779B97F4A7C15, 15), (12345, 130))
    ],
}
print(json.dumps(golden, indent=1))

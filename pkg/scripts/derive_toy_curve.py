"""Search for the toy curve y^2 = x^3 + 7 over a small prime.

Run once; the chosen constants are committed in ``kleptolab.curve``.
Criteria: the full group has prime order n (cofactor 1) with
``MIN_ORDER <= n <= MAX_ORDER`` and n != p (an anomalous curve would let
p/n mix-ups pass unnoticed), and no point has x = 0 mod n, so ECDSA
never hits r = 0 and exhaustive signing loops need no special cases.
"""

import sys

MIN_ORDER = 100
MAX_ORDER = 400


def is_prime(m):
    if m < 2:
        return False
    i = 2
    while i * i <= m:
        if m % i == 0:
            return False
        i += 1
    return True


def points(p):
    squares = {}
    for y in range(p):
        squares.setdefault(y * y % p, []).append(y)
    pts = []
    for x in range(p):
        for y in squares.get((x**3 + 7) % p, []):
            pts.append((x, y))
    return pts


def main():
    for p in range(3, 1 << 16):
        if not is_prime(p) or (4 * 0 + 27 * 49) % p == 0:
            continue
        pts = points(p)
        n = len(pts) + 1
        if not (MIN_ORDER <= n <= MAX_ORDER and is_prime(n)) or n == p:
            continue
        if any(x % n == 0 for x, _ in pts):
            continue
        # smallest x, even y as generator (any point generates a prime-order group)
        gx, gy = min(pts)
        print(f"p={p} n={n} G=({gx}, {gy})")
        return 0
    print("no candidate found", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())

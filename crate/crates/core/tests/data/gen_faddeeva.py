"""Reference values of w(z) = exp(-z^2) erfc(-iz) at 40 significant digits.

5000 points on a polar grid and 5000 uniform random points, all in the
closed upper half plane with |z| <= 30.
"""
import math
import random

import mpmath

mpmath.mp.dps = 40


def w(z):
    z = mpmath.mpc(z)
    return mpmath.exp(-z * z) * mpmath.erfc(-1j * z)


def points():
    for i in range(50):
        r = 30.0 * (i + 0.5) / 50
        for j in range(100):
            th = math.pi * j / 99
            yield r * math.cos(th), r * math.sin(th)
    rng = random.Random(20240611)
    n = 0
    while n < 5000:
        x, y = rng.uniform(-30, 30), rng.uniform(0, 30)
        if x * x + y * y <= 900:
            n += 1
            yield x, y


with open("faddeeva_mpmath.csv", "w") as f:
    f.write("re,im,w_re,w_im\n")
    for x, y in points():
        v = w(mpmath.mpc(x, y))
        f.write(f"{x!r},{y!r},{mpmath.nstr(v.real, 20, min_fixed=0, max_fixed=0)},{mpmath.nstr(v.imag, 20, min_fixed=0, max_fixed=0)}\n")

"""Brute-force reference implementations, written with explicit loops.

These deliberately share no code with the package so that agreement is
meaningful. They are only fast enough for tiny images.
"""

import math

import numpy as np


def clamp(i, n):
    return min(max(i, 0), n - 1)


def correlate_loop(img, k):
    """Same-size correlation with replicated borders."""
    img = np.asarray(img, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    h, w = img.shape
    kh, kw = k.shape
    rh, rw = kh // 2, kw // 2
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            s = 0.0
            for a in range(kh):
                for b in range(kw):
                    s += k[a, b] * img[clamp(i + a - rh, h), clamp(j + b - rw, w)]
            out[i, j] = s
    return out


def convolve_loop(img, k):
    """Same-size convolution: out[i,j] = sum k[a,b] x[i-a+rh, j-b+rw]."""
    img = np.asarray(img, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    h, w = img.shape
    kh, kw = k.shape
    rh, rw = kh // 2, kw // 2
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            s = 0.0
            for a in range(kh):
                for b in range(kw):
                    s += k[a, b] * img[clamp(i - a + rh, h), clamp(j - b + rw, w)]
            out[i, j] = s
    return out


def rl_loop(y, k, iters, floor=1e-12):
    y = np.asarray(y, dtype=np.float64)
    x = y.copy()
    for _ in range(iters):
        est = convolve_loop(x, k)
        ratio = y / np.maximum(est, floor)
        x = x * correlate_loop(ratio, k)
    return x


def gauss_window(size=11, sigma=1.5):
    r = [i - size // 2 for i in range(size)]
    g = [[math.exp(-(a * a + b * b) / (2 * sigma * sigma)) for b in r] for a in r]
    total = sum(sum(row) for row in g)
    return [[v / total for v in row] for row in g]


def ssim_loop(a, b, size=11, sigma=1.5, c1=1e-4, c2=9e-4):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    h, w = a.shape
    g = gauss_window(size, sigma)
    r = size // 2
    acc = 0.0
    for i in range(h):
        for j in range(w):
            ma = mb = saa = sbb = sab = 0.0
            for u in range(size):
                for v in range(size):
                    p = a[clamp(i + u - r, h), clamp(j + v - r, w)]
                    q = b[clamp(i + u - r, h), clamp(j + v - r, w)]
                    wt = g[u][v]
                    ma += wt * p
                    mb += wt * q
                    saa += wt * p * p
                    sbb += wt * q * q
                    sab += wt * p * q
            va, vb, cov = saa - ma * ma, sbb - mb * mb, sab - ma * mb
            acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
    return acc / (h * w)


def psnr_loop(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    s = 0.0
    n = 0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            s += (a[i, j] - b[i, j]) ** 2
            n += 1
    return 10 * math.log10(1.0 / (s / n))

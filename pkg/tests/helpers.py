import numpy as np


def random_psd(rng, n, rank=None):
    F = rng.standard_normal((n, rank or n))
    return F @ F.T


def random_batch(rng, n, d, shift=0.5, m=1):
    """(Zs, Zt, ys, yt) with a shifted target."""
    Zs = rng.standard_normal((n, d))
    Zt = rng.standard_normal((n, d)) + shift
    ys = rng.uniform(0.0, 1.0, size=(n, m))
    yt = rng.uniform(0.0, 1.0, size=(n, m))
    return Zs, Zt, ys, yt

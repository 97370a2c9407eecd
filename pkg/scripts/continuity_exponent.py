"""Empirical Hoelder exponent of the L^p projection along random rays.

For each p the fitted slope of log ||E(f + h v) - E f||_p^p against
log ||h v||_p^p is printed (median and spread over rays).
"""
import numpy as np

from pqlab.instances import random_instance
from pqlab.measure import Field
from pqlab.rng import SplitMix64
from pqlab.solver import continuity_profile

if __name__ == "__main__":
    print("p,theta_median,theta_min,theta_max")
    for p in (1.5, 2.0, 3.0, 4.0, 6.0):
        thetas = []
        for seed in range(8):
            S, _, f = random_instance(12, 2, 6, p, seed=seed).realize()
            v = Field(S.space, SplitMix64(100 + seed).normal(S.space.dim).reshape(12, 2))
            thetas.append(continuity_profile(S, f.a, v, p).theta)
        t = np.array(thetas)
        print(f"{p:g},{np.median(t):.4f},{t.min():.4f},{t.max():.4f}")

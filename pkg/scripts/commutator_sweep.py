"""Power commutator defect against eps on grid graphs of growing size.

Prints, per grid size, exponent s and sign, the range of defect/|eps| over the
default eps grid.  A flat ratio is the O(|eps|) behaviour.
"""
import numpy as np

from pqlab.battery import EPS_GRID
from pqlab.instances import grid_hodge_instance
from pqlab.subspace import commutator_defect

if __name__ == "__main__":
    print("grid,s,sign,min_ratio,max_ratio,spread")
    for n in (3, 4, 6, 8):
        S, _, f = grid_hodge_instance(n, n, 2.0, seed=n, random_weights=True).realize()
        for s in (1.5, 2.0, 3.0):
            for sign in "+-":
                r = np.array([commutator_defect(S, sign, f.a, e, s)[1] for e in EPS_GRID])
                print(f"{n}x{n},{s:g},{sign},{r.min():.4g},{r.max():.4g},{r.max() / r.min():.3f}")

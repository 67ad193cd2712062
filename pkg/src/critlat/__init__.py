"""Critical lattice models in four dimensions.

Random walks and their loop-erasures, uniform spanning forests sampled with
Wilson's algorithm, lattice Green functions, the spin field built from the
forest components, escape and intersection probabilities, the two-sided
loop-erased walk, exact small-graph oracles, and a reproducible experiment
harness.
"""

__version__ = "0.1.0"

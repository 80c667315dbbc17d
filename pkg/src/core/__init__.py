"""
Core data structures and numerics.

- dataset: rating logs, binarization, filtering, splits
- graph: MC expansion graph, normalization, propagation
- model: forward/backward passes, PairNorm, checkpoints
- seeding, errors: random streams and the exception hierarchy
"""

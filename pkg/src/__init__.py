"""
mcrec - Multi-Criteria Recommendation

CPA-LGC (criteria preference-aware light graph convolution) with its
ablations, LightGCN baselines, BPR training, top-K evaluation and
diagnostics, usable as a library or through the command line.
"""

__version__ = "1.0.0"
__author__ = "mcrec Team"

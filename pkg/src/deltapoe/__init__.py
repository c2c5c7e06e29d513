"""deltapoe: a kernel for engineering staged organisational change.

Parses models, change problems and derivation scripts written in the
``.poed`` surface language, checks derivations built from the change
calculus rules, extracts delivery plans, analyses change propagation
across phenomena-connected domains, and tracks delegation workflows.
"""

__version__ = "0.1.0"

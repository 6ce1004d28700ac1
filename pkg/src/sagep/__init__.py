"""Surrogate-assisted gene expression programming for expensive
multi-objective model training.

The package couples a linear-genotype symbolic regression engine (symreg)
with a Gaussian-process surrogate (surrogate) over expression embeddings
(embedding).  A per-generation selection policy (selection) decides which
candidates earn a true evaluation against an expensive oracle (evaluators);
the orchestrator runs the loop, persists every outcome, and supports
passive replay of stored runs; metrics provides hypervolume coverage and
the efficiency measures.
"""

from . import (cli, embedding, evaluators, metrics, orchestrator, selection,
               surrogate, symreg)

__all__ = [
    "cli",
    "embedding",
    "evaluators",
    "metrics",
    "orchestrator",
    "selection",
    "surrogate",
    "symreg",
]

__version__ = "0.1.0"

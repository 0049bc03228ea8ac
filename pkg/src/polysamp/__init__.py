"""Sampling from Lipschitz log-concave densities on polytopes with
infinity-distance (sup of |log density ratio|) error guarantees.

The package composes three layers:

* a Metropolized Dikin walk (:mod:`polysamp.dikin`) that produces samples
  close to the target in total variation,
* a rejection post-processor (:mod:`polysamp.converter`) that upgrades the
  TV guarantee to an infinity-distance guarantee, which is the metric pure
  differential privacy needs,
* brute-force verification oracles (:mod:`polysamp.oracle`) that check the
  output distributions at desk scale, plus a private ERM wrapper
  (:mod:`polysamp.dp`) built on the exponential mechanism.

Everything is driven either from Python (see :mod:`polysamp.pipeline`) or
from the command line (``python -m polysamp --help``).
"""

__version__ = "0.1.0"

from .errors import ConfigError, ContractViolation

__all__ = ["ConfigError", "ContractViolation", "__version__"]

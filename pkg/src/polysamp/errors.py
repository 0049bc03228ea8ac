"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, ContractViolation -> 3.
"""


class ConfigError(ValueError):
    """Bad user input: malformed files, out-of-range parameters, size guards."""


class ContractViolation(RuntimeError):
    """A runtime promise was broken, e.g. a sampling oracle returned a point
    outside the polytope, or a sampled point landed outside the declared
    outer ball. These indicate an inconsistent problem declaration, not a
    user typo, and abort the run."""

"""Security-constrained reinforcement learning over quantified time-window specs.

Pipeline: parse a quantified formula, compile it to a DFA over tuple
alphabets, self-compose the grid MDP, build the product/timed MDP, prune
infeasible actions, and learn a policy with tabular RL.
"""

from . import errors

__version__ = "0.1.0"

__all__ = ["errors", "__version__"]

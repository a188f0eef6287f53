"""Exception types shared across the package."""


class SecrlError(Exception):
    """Base class for all errors raised by this package."""


class FormulaSyntaxError(SecrlError):
    """Malformed formula text.  Carries 1-based line/column of the offending token."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ClosureError(SecrlError):
    """A trace variable in the body is not bound by the quantifier prefix."""


class AlternationError(SecrlError):
    """The quantifier prefix mixes universal and existential quantifiers."""


class TraceTooShort(SecrlError):
    """A trace does not cover the execution deadline of the formula."""


class UnknownProposition(SecrlError):
    """An event references a proposition outside the declared alphabet."""


class AlphabetMismatch(SecrlError):
    """Formula propositions or labels fall outside the automaton alphabet."""


class WidthError(SecrlError):
    """Tuple-alphabet width does not admit the requested projection."""


class LabelMismatch(SecrlError):
    """Kripke labels are not symbols of the automaton alphabet."""


class LayoutError(SecrlError):
    """Mission layout coordinates are out of range or inconsistent."""


class NoFeasibleAction(SecrlError):
    """Every action from a state leads only to states at infinite distance."""


class EmptyFeasibleSet(SecrlError):
    """Action selection was asked to choose from an empty feasible set."""


class Infeasible(SecrlError):
    """Pruning removed every action at the initial state.

    ``state`` is the offending initial state and ``best_bound`` the best
    satisfaction bound achievable by any of its original actions.
    """

    def __init__(self, message, state=None, best_bound=None):
        self.state = state
        self.best_bound = best_bound
        super().__init__(message)


class InsufficientData(SecrlError):
    """Record series too short for the requested checkpoint/window."""

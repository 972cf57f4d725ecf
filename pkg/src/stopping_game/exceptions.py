"""Exception hierarchy shared by every module of the package."""


class StoppingGameError(Exception):
    """Base class for all errors raised by :mod:`stopping_game`."""


class DomainError(StoppingGameError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class NearlyRepeatedRoots(StoppingGameError):
    """Two roots of ``psi(s) = q`` are too close for a distinct-root expansion."""


class NoFiniteRoot(StoppingGameError):
    """An auxiliary function has no finite sign change (e.g. ``a_underbar = -inf``)."""


class NoBestResponse(StoppingGameError):
    """Player C has no first-order best response to the given threshold."""


class NoSignChange(StoppingGameError):
    """The equilibrium scan found no sign change of ``l -> J(l; a~(l))``."""


class NoBracket(StoppingGameError):
    """A bisection could not be bracketed on the requested interval."""

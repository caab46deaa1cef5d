"""Exception hierarchy shared by all poanet modules."""


class PoanetError(Exception):
    """Base class for all errors raised by this package."""


# -- network construction ----------------------------------------------------

class InvalidLink(PoanetError):
    """A link has a nonpositive free-flow time or capacity, or is a self-loop."""


class NotStronglyConnected(PoanetError):
    """The directed graph is not strongly connected.

    Carries the offending (source, unreachable) node pair.
    """

    def __init__(self, source, unreachable):
        self.source = source
        self.unreachable = unreachable
        super().__init__(f"no directed path from node {source!r} to node {unreachable!r}")


# -- latency evaluation ------------------------------------------------------

class NegativeCongestionRatio(PoanetError):
    """A latency factor was evaluated at a negative flow-to-capacity ratio."""


# -- equilibrium solvers -----------------------------------------------------

class InfeasibleDemand(PoanetError):
    """The demand vector does not match the network's OD pairs."""


class NotConverged(PoanetError):
    """The assignment loop hit its iteration budget above the gap tolerance.

    The best iterate is attached as ``result``.
    """

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


class NonConvexObjective(PoanetError):
    """Per-link total cost x*t(x) failed the numerical convexity check."""


class ZeroSocialCost(PoanetError):
    """Price of anarchy is undefined because the social cost is zero."""


# -- quadratic programming ---------------------------------------------------

class QPError(PoanetError):
    """Base class for convex-QP solver failures."""


class Infeasible(QPError):
    """The constraint set was certified empty."""


class Unbounded(QPError):
    """The objective was certified unbounded below on the feasible set."""


class MaxIterations(QPError):
    """The QP solver hit its iteration budget; best iterate attached as ``result``."""

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


# -- inverse problem and demand estimation -----------------------------------

class EmptyObservations(PoanetError):
    """An observation set with zero flow samples was supplied."""


class InsufficientObservations(PoanetError):
    """Fewer observations than cross-validation folds."""


class TooFewSamples(PoanetError):
    """Sample statistics need at least two flow observations."""


# -- sensitivity -------------------------------------------------------------

class NonPositivePerturbedTime(PoanetError):
    """A free-flow time perturbation would make the time nonpositive."""


class MissingZoneLabels(PoanetError):
    """Zone costs were requested but the network has no (complete) zone map."""


# -- file ingestion ----------------------------------------------------------

class MalformedHeader(PoanetError):
    """A network file metadata header is missing or inconsistent."""


class BadRow(PoanetError):
    """A data row could not be parsed; carries the 1-based line number."""

    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class UnknownZone(PoanetError):
    """A trips entry references a zone outside the declared range."""


class MalformedBlock(PoanetError):
    """A trips file entry appeared outside an origin block or is unparseable."""


class NonPositiveFreeFlowSpeed(PoanetError):
    """Speed-to-flow conversion needs a positive free-flow speed."""


class EmptyWindow(PoanetError):
    """A requested aggregation window matched no speed records."""

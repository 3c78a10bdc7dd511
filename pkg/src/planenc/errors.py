"""Exception types shared across the toolkit."""


class PlanEncError(Exception):
    """Base class for all toolkit errors."""


class MalformedDocument(PlanEncError):
    """Plan document could not be parsed."""


class EmptyPlan(PlanEncError):
    """Document contained no root plan node."""


class NegativeLabel(PlanEncError):
    """A metric label was negative or violated startup <= total ordering."""


class SchemaMismatch(PlanEncError):
    """Feature vector or tensor shape disagrees with the declared schema."""


class SequenceTooLong(PlanEncError):
    """Linearized plan exceeds the configured token cap."""


class UnbalancedBrackets(PlanEncError):
    """Bracket tokens in a sequence do not balance."""


class DanglingTokens(PlanEncError):
    """Tokens remain after the root subtree was consumed."""


class TooLarge(PlanEncError):
    """Instance exceeds the exact-matcher size guard."""


class ShapeMismatch(PlanEncError):
    """Tensor operands have incompatible shapes."""


class UnknownId(PlanEncError):
    """Embedding id outside the table range."""


class EmptyDataset(PlanEncError):
    """Training dataset has no rows."""


class ScoreOutOfRange(PlanEncError):
    """Pair similarity label outside [0, 1]."""


class ArchitectureMismatch(PlanEncError):
    """Checkpoint architecture incompatible with the requested model."""


class MissingCheckpoint(PlanEncError):
    """A required encoder checkpoint was not loaded."""


class InvalidRange(PlanEncError):
    """Configuration sampling range is empty or inverted."""


class InsufficientPlans(PlanEncError):
    """Not enough plans to build the requested pair dataset."""


class UnknownLabel(PlanEncError):
    """Classification label outside the known template/cluster sets."""

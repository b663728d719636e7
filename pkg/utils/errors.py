"""
Exception types raised across the money-request toolkit.

Every error carries enough context to be written to the error log as-is.
"""


class MoneyGamesError(Exception):
    """Base class for all toolkit errors."""

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context

    def to_log(self):
        return {"error": type(self).__name__, "message": str(self), **{k: str(v) for k, v in self.context.items()}}


# games
class InvalidSpec(MoneyGamesError):
    pass


class ActionOutOfRange(MoneyGamesError):
    pass


class SampleTooLarge(MoneyGamesError):
    pass


# equilibria
class Unresolved(MoneyGamesError):
    pass


class NoConvergence(MoneyGamesError):
    pass


# agents
class BackendUnavailable(MoneyGamesError):
    pass


class AllResponsesInvalid(MoneyGamesError):
    pass


class MismatchedSettings(MoneyGamesError):
    pass


class MissingSetting(MoneyGamesError):
    pass


# optimize
class SupportViolation(MoneyGamesError):
    pass


class BudgetExhausted(MoneyGamesError):
    def __init__(self, message, best=None, **context):
        super().__init__(message, **context)
        self.best = best


# stats
class ZeroLikelihood(MoneyGamesError):
    pass


class AllZeros(MoneyGamesError):
    pass


class RankDeficient(MoneyGamesError):
    pass


# pipeline
class MalformedInput(MoneyGamesError):
    def __init__(self, message, lines=(), **context):
        super().__init__(message, **context)
        self.lines = list(lines)


class DuplicateResponse(MoneyGamesError):
    pass


class MissingModelDistribution(MoneyGamesError):
    pass


class InputUnavailable(MoneyGamesError):
    pass

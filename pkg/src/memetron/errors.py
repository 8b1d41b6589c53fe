"""Exception hierarchy."""


class MemetronError(Exception):
    """Base class for all library errors."""


class ValidationError(MemetronError, ValueError):
    """Invalid input or configuration."""


class ConfigError(ValidationError):
    def __init__(self, field: str, reason: str) -> None:
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class BudgetExceeded(MemetronError):
    """An operation would exceed the model-call or reward-evaluation budget."""


class EmptyHistoryError(MemetronError):
    pass


class InsufficientHistoryError(MemetronError):
    pass


class DanglingParentError(MemetronError):
    pass


class UnscoredCandidateError(MemetronError):
    pass


class NonFiniteRewardError(MemetronError, ValueError):
    pass


class TemplateError(MemetronError):
    """Template rendering failure or unparseable rendered template."""


class GeneratorError(MemetronError):
    """Generator backend failed after retries."""


class EmptyCompletionError(GeneratorError):
    def __init__(self, index: int) -> None:
        super().__init__(f"completion {index} is empty after a redraw")
        self.index = index


class RateLimitError(GeneratorError):
    pass


class AuthError(GeneratorError):
    pass


class RewardError(MemetronError):
    """Reward backend transport or protocol failure."""


class StatsError(MemetronError, ValueError):
    pass


class DegenerateSampleError(StatsError):
    pass


class MissingGenerationError(StatsError):
    pass

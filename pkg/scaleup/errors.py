class ScaleupError(Exception):
    """Base error; `exit_code` is what the CLI returns when it escapes a command."""

    exit_code = 1


class SurveyValidationError(ScaleupError, ValueError):
    """Malformed input, invalid configuration or a violated call contract."""

    exit_code = 2


class DegenerateEstimateError(ScaleupError, ValueError):
    """A ratio or regression has no defined value (zero sum, zero variance, too few points)."""

    exit_code = 3


class GuardError(ScaleupError):
    """Predicted inverse degree ratio is not positive and no clamp is configured."""

    exit_code = 3

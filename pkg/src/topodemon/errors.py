class ParameterError(ValueError):
    """Invalid input parameter. ``field`` names the offending argument."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class CapacityError(RuntimeError):
    """Instance too large for an exhaustive routine."""

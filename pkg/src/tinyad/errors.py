"""Exception hierarchy. The CLI maps these onto exit codes."""


class TinyADError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(TinyADError, ValueError):
    pass


class RangeError(ShapeError, IndexError):
    pass


class ParseError(TinyADError, ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ValidationError(TinyADError, ValueError):
    def __init__(self, message, layer_index=None):
        self.layer_index = layer_index
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)


class StreamError(TinyADError, IOError):
    def __init__(self, message, last_good_index):
        self.last_good_index = last_good_index
        super().__init__(f"{message} (last good layer index: {last_good_index})")


class PlanError(TinyADError, ValueError):
    pass


class BudgetError(TinyADError):
    def __init__(self, message, layer_index=None, live_bytes=None, budget=None):
        self.layer_index = layer_index
        self.live_bytes = live_bytes
        self.budget = budget
        super().__init__(message)


class WindowError(TinyADError, ValueError):
    pass


class SilentWindowError(WindowError):
    pass


class IngestionError(TinyADError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)

class AestheticsError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigurationError(AestheticsError):
    pass


class SchemaError(AestheticsError, ValueError):
    pass


class TargetValidationError(AestheticsError, ValueError):
    def __init__(self, message, row=None, column=None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyVotesError(AestheticsError, ValueError):
    pass


class EmptySplitError(AestheticsError, ValueError):
    pass


class ImageDecodeError(AestheticsError, ValueError):
    def __init__(self, path, reason):
        super().__init__(f"Cannot decode image '{path}': {reason}")
        self.path = path


class BackboneLoadError(AestheticsError):
    pass


class UnknownLayerError(AestheticsError, KeyError):
    def __init__(self, names, valid_names):
        self.names = sorted(names)
        self.valid_names = list(valid_names)
        super().__init__(
            f"Unknown layer(s) {', '.join(self.names)}. "
            f"Valid names: {', '.join(self.valid_names)}"
        )

    def __str__(self):
        return self.args[0]


class TrainingDivergedError(AestheticsError):
    def __init__(self, step, loss):
        super().__init__(f"Non-finite training loss {loss} at step {step}")
        self.step = step


class UndefinedCorrelationError(AestheticsError, ValueError):
    pass


class CheckpointMismatchError(AestheticsError):
    pass

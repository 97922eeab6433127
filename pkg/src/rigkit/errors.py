"""Exception types raised across rigkit."""


class RigkitError(Exception):
    """Base class for every error raised by rigkit."""


class ShapeError(RigkitError, ValueError):
    pass


class SkeletonError(RigkitError, ValueError):
    pass


class DecodeError(RigkitError, ValueError):
    """A 6D rotation could not be decoded by Gram-Schmidt."""

    def __init__(self, message, frame=None, joint=None):
        where = []
        if frame is not None:
            where.append(f"frame {frame}")
        if joint is not None:
            where.append(f"joint {joint}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.frame = frame
        self.joint = joint


class ReferenceMismatchError(RigkitError, ValueError):
    """The reference pose/rotation pair does not fit the skeleton or pose."""

    def __init__(self, message, joint=None):
        if joint is not None:
            message = f"{message} (joint {joint})"
        super().__init__(message)
        self.joint = joint


class BvhError(RigkitError, ValueError):
    pass


class BvhSyntaxError(BvhError):
    def __init__(self, message, line, column, expected=None):
        text = f"line {line}, column {column}: {message}"
        if expected is not None:
            text += f" (expected {expected})"
        super().__init__(text)
        self.line = line
        self.column = column
        self.expected = expected


class BvhArityError(BvhError):
    def __init__(self, message, row=None, line=None):
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if row is not None:
            prefix.append(f"row {row}")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)
        self.row = row
        self.line = line


class UnsupportedChannelsError(BvhError):
    pass

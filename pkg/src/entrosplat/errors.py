"""Exception types shared across the package.

Two broad families matter for the CLI exit codes: ValidationError (bad
inputs, bad configuration, violated preconditions -> exit 1) and IoFailure
(filesystem problems -> exit 2).
"""


class EntrosplatError(Exception):
    pass


class ValidationError(EntrosplatError):
    pass


class IoFailure(EntrosplatError):
    pass


class MissingFile(IoFailure):
    pass


class MalformedHeader(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NonRigidPose(ValidationError):
    pass


class DegenerateCamera(ValidationError):
    pass


class NonPositiveDepth(ValidationError):
    pass


class BehindCamera(ValidationError):
    pass


class EmptyCloud(ValidationError):
    pass


class Unreachable(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class NonFiniteActivation(ValidationError):
    pass


class MissingForwardCache(ValidationError):
    pass


class MissingContributorCache(ValidationError):
    pass


class UnsortedInput(ValidationError):
    pass

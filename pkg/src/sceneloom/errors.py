"""Exception hierarchy shared across the engine."""


class SceneloomError(Exception):
    """Base class for all engine errors."""


class SceneError(SceneloomError):
    """Errors raised by scene mutations."""


class DuplicateName(SceneError):
    pass


class UnknownObject(SceneError):
    pass


class BadAxis(SceneError):
    pass


class NonPositiveScale(SceneError):
    pass


class BadCount(SceneError):
    pass


class EmptyMesh(SceneError):
    pass


class DegenerateMesh(SceneError):
    pass


class BadZoom(SceneloomError):
    pass


class BadDirection(SceneloomError):
    pass


class ParseError(SceneloomError):
    """A model response could not be turned into an action batch.

    ``kind`` is one of: NoActionBlock, MalformedJson, UnknownActionType,
    ArityMismatch.
    """

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class ProviderError(SceneloomError):
    """Errors from asset/texture providers."""


class ProviderUnavailable(ProviderError):
    pass


class GenerationFailed(ProviderError):
    pass


class GatewayError(SceneloomError):
    """Errors from the model gateway; they pause a session, never corrupt it."""


class Unreachable(GatewayError):
    pass


class AuthFailure(GatewayError):
    pass


class ReplayExhausted(GatewayError):
    pass


class BadConfig(SceneloomError):
    pass


class NotFound(SceneloomError):
    pass


class SessionAborted(SceneloomError):
    pass

"""Exception hierarchy shared across the engine."""


class SkygroundError(Exception):
    """Base class for all engine errors."""


# -- map loading / geometry --------------------------------------------------

class MalformedFile(SkygroundError):
    pass


class DanglingReference(SkygroundError):
    pass


class InvalidGeometry(SkygroundError):
    pass


class ConflictViolation(SkygroundError):
    pass


class OutOfRange(SkygroundError):
    pass


class EmptyNetwork(SkygroundError):
    pass


# -- dynamics ----------------------------------------------------------------

class InvalidGap(SkygroundError):
    pass


class NoServingPhase(SkygroundError):
    pass


# -- world stepping ----------------------------------------------------------

class UnknownEntity(SkygroundError):
    pass


class NotControllable(SkygroundError):
    pass


class InvalidAction(SkygroundError):
    pass


class VersionMismatch(SkygroundError):
    pass


# -- sensors -----------------------------------------------------------------

class UnknownMountEntity(SkygroundError):
    pass


class UnknownCamera(SkygroundError):
    pass


class IoFailure(SkygroundError):
    pass


# -- events ------------------------------------------------------------------

class InvalidEvent(SkygroundError):
    pass


class EditTargetMissing(SkygroundError):
    pass


# -- comms -------------------------------------------------------------------

class PayloadTooLarge(SkygroundError):
    pass


class UnknownSender(SkygroundError):
    pass


# -- env / protocol ----------------------------------------------------------

class ConfigInvalid(SkygroundError):
    def __init__(self, report):
        self.report = report
        super().__init__("; ".join(str(e) for e in getattr(report, "errors", [report])))


class ProtocolError(SkygroundError):
    pass


class TransportClosed(SkygroundError):
    pass

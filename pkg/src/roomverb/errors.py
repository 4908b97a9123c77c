"""Exception hierarchy.

Every error carries a short machine-readable ``category`` that the command
line reports on failure.
"""


class RoomverbError(Exception):
    category = "Error"


class InsufficientPlanes(RoomverbError):
    category = "InsufficientPlanes"


class DegenerateInput(RoomverbError):
    category = "DegenerateInput"


class OutOfRoom(RoomverbError):
    category = "OutOfRoom"


class FaceMismatch(RoomverbError):
    category = "FaceMismatch"


class UnknownMaterial(RoomverbError):
    category = "UnknownMaterial"


class IncompleteTable(RoomverbError):
    category = "IncompleteTable"


class EmptyGrid(RoomverbError):
    category = "EmptyGrid"


class EmptyDataset(RoomverbError):
    category = "EmptyDataset"


class InvalidGeometry(RoomverbError):
    category = "InvalidGeometry"


class SourceOutsideRoom(RoomverbError):
    category = "SourceOutsideRoom"


class InvalidLength(RoomverbError):
    category = "InvalidLength"


class BlockSizeMismatch(RoomverbError):
    category = "BlockSizeMismatch"


class RateMismatch(RoomverbError):
    category = "RateMismatch"


class RateTooLow(RoomverbError):
    category = "RateTooLow"


class ZeroEnergy(RoomverbError):
    category = "ZeroEnergy"


class NoValidPairs(RoomverbError):
    category = "NoValidPairs"


class ParseError(RoomverbError):
    category = "ParseError"


class InvalidScene(RoomverbError):
    category = "InvalidScene"


class StreamOrderError(RoomverbError):
    category = "StreamOrderError"


class MissingPair(RoomverbError):
    category = "MissingPair"

"""
Weeding Robot MCU — Error Types
================================
Every failure the firmware or the simulator can report derives from
WeedbotError, so callers can catch the whole family in one place.
"""


class WeedbotError(Exception):
    """Base class for all weedbot errors."""


# ── core-messages ──

class RangeError(WeedbotError, ValueError):
    """A value does not fit its type range or its wire representation."""


class FrameError(WeedbotError):
    """A frame was dropped by the decoder."""


class ChecksumError(FrameError):
    pass


class UnknownTypeError(FrameError):
    pass


class FrameLengthError(FrameError):
    """Payload length does not match the message type."""


class EscapeError(FrameError):
    """An escape byte followed by something other than an escaped 0x7E or 0x7D."""


# ── sim-kernel ──

class KernelError(WeedbotError):
    pass


class TimeReversalError(KernelError, ValueError):
    pass


class UnhandledInterruptError(KernelError):
    pass


class DuplicateRegistrationError(KernelError):
    pass


# ── sensors / io-sources / control ──

class OrderingError(WeedbotError, ValueError):
    """A timestamp arrived earlier than one already recorded."""


class EdgeOrderError(WeedbotError):
    """RC pin edges did not alternate rise/fall."""


class StrategyNotFoundError(WeedbotError, LookupError):
    pass


class EmptyReadError(WeedbotError):
    pass


class SerialWriteError(WeedbotError, IOError):
    pass


# ── assembly / configuration / scenarios ──

class ConfigError(WeedbotError, KeyError):
    def __str__(self):
        # KeyError quotes its argument; keep the message readable
        return str(self.args[0]) if self.args else ""


class BuildError(WeedbotError):
    pass


class ScenarioLoadError(WeedbotError):
    pass

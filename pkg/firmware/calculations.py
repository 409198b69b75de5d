"""
Weeding Robot MCU — Calculations
=================================
Interchangeable calculation functions and the argument records they take.

Every calculation receives one argument record.  Records start from a base
(`CalcArgs`, the sample window) and are extended by decorators that add the
arguments a particular function needs, without changing the base fields:

    args = WidthArgs(CalcArgs(dt=0.1), width=1750, center=1500, span=500)
    PercentFromWidth().calculate(args)   # 50.0
"""

from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass

import numpy as np

from firmware.errors import StrategyNotFoundError
from firmware.kernel import US_PER_S


# ============================================================
# ARGUMENT RECORDS
# ============================================================

@dataclass(frozen=True)
class CalcArgs:
    dt: float = 0.0     # s


class ArgsDecorator:
    """Wraps an argument record and adds named fields on top of it."""

    required = ()

    def __init__(self, inner, **extra):
        missing = [name for name in self.required if name not in extra]
        if missing:
            raise TypeError(f"{type(self).__name__} needs {', '.join(missing)}")
        self._inner = inner
        self._extra = extra

    def __getattr__(self, name):
        extra = self.__dict__.get('_extra', {})
        if name in extra:
            return extra[name]
        return getattr(self.__dict__['_inner'], name)

    def fields(self):
        inner = self._inner
        base = inner.fields() if isinstance(inner, ArgsDecorator) else asdict(inner)
        return {**base, **self._extra}


class CountArgs(ArgsDecorator):
    required = ('count', 'ppr')


class WidthArgs(ArgsDecorator):
    required = ('width', 'center', 'span')


class PercentArgs(ArgsDecorator):
    required = ('percent', 'full_scale')


# ============================================================
# CALCULATIONS
# ============================================================

class Calculation(ABC):
    name = ''

    @abstractmethod
    def calculate(self, args):
        ...


class RpmFromCount(Calculation):
    """Edge count over the window -> shaft speed in rpm."""
    name = 'rpm_from_count'

    def calculate(self, args):
        window_us = int(round(args.dt * US_PER_S))
        if window_us <= 0 or args.ppr <= 0:
            raise ValueError("dt and ppr must be > 0")
        # whole microseconds keep exact counts exact
        return args.count * 60.0 * US_PER_S / (args.ppr * window_us)


class PercentFromWidth(Calculation):
    """RC pulse width -> stick deflection in percent, clamped to +/-100."""
    name = 'percent_from_width'

    def calculate(self, args):
        percent = (args.width - args.center) * 100.0 / args.span
        return float(np.clip(percent, -100.0, 100.0))


class ScalePercent(Calculation):
    name = 'scale_percent'

    def calculate(self, args):
        return args.percent / 100.0 * args.full_scale


CALCULATIONS = {cls.name: cls for cls in (RpmFromCount, PercentFromWidth, ScalePercent)}


def get_calculation(name):
    try:
        return CALCULATIONS[name]()
    except KeyError:
        raise StrategyNotFoundError(f"no calculation named {name!r}") from None

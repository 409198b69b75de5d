"""
Weeding Robot MCU — Shared Constants
=====================================
Every constant used by more than one module lives here, once.  The shared
instance is created lazily by get_config(); scenario runs derive private
copies with Config.with_overrides() so the shared values never drift.

Config files are flat ``key=value`` text:

    # plant
    plant.kv=12.5
    fsm.n=5

Usage:
    from config import get_config, load_config
    cfg = get_config()
    kp = cfg['wheel.kp']
"""

import logging
import os

from firmware.errors import ConfigError

logger = logging.getLogger(__name__)

# ============================================================
# DEFAULT VALUES
# ============================================================
# Plant constants are simulation choices, not measured robot data.
DEFAULTS = {
    # wheel plant: first-order velocity model + resistive current model
    'plant.kv': 12.5,              # rpm per volt
    'plant.tau': 0.5,              # s
    'plant.r': 0.5,                # ohm
    'plant.ppr': 24,               # Hall pulses per revolution
    'plant.v_max': 24.0,           # V
    # steering plant
    'plant.slew': 60.0,            # deg/s
    'steer.limit': 30.0,           # deg, extreme left/right
    'steer.deadband': 0.5,         # deg
    # sensors
    'sensor.current_limit': 5000,  # mA
    'sensor.ring': 64,             # edge timestamps kept
    # wheel control
    'wheel.kp': 0.08,              # V/rpm
    'wheel.ki': 0.2,               # V/(rpm*s)
    'wheel.kp_cur': 0.0001,        # V/mA
    'wheel.ki_cur': 0.002,         # V/(mA*s)
    'wheel.output_limit': 24.0,    # V
    # main control
    'fsm.n': 5,
    'timer.first_ms': 100,
    'timer.second_ms': 10,
    # serial link
    'serial.sync_threshold': 3,
    'serial.out_queue': 64,
    # RC receiver
    'rc.min_width': 900,           # us
    'rc.max_width': 2100,          # us
    'rc.center': 1500,             # us
    'rc.span': 500,                # us from center to full deflection
    'rc.stale_ms': 100,
    'rc.max_rpm': 300.0,
}


def parse_value(text):
    """Parse a config value: int when it looks like one, else float."""
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_config_lines(lines, source='<text>'):
    """Parse key=value lines into a dict, skipping blanks and # comments."""
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, _, value = line.partition('=')
        key = key.strip()
        try:
            values[key] = parse_value(value)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: {key} has non-numeric value {value.strip()!r}") from None
    return values


class Config:
    """Immutable view over constant values."""

    def __init__(self, values=None):
        self._values = dict(DEFAULTS if values is None else values)

    def __getitem__(self, key):
        try:
            return self._values[key]
        except KeyError:
            raise ConfigError(f"missing config key '{key}'") from None

    def __contains__(self, key):
        return key in self._values

    def get(self, key, default=None):
        return self._values.get(key, default)

    def keys(self):
        return self._values.keys()

    def as_dict(self):
        return dict(self._values)

    def with_overrides(self, overrides=None, **kwargs):
        """Return a copy with some keys replaced (or added)."""
        merged = dict(self._values)
        merged.update(overrides or {})
        merged.update({k.replace('__', '.'): v for k, v in kwargs.items()})
        return Config(merged)

    def without(self, *keys):
        """Return a copy missing the given keys (used to probe builders)."""
        return Config({k: v for k, v in self._values.items() if k not in keys})

    def __repr__(self):
        return f"Config({len(self._values)} keys)"


_shared = None


def get_config():
    """Return the shared Config instance, creating it from DEFAULTS once."""
    global _shared
    if _shared is None:
        _shared = Config()
    return _shared


def load_config(path, base=None):
    """Overlay a key=value file on `base` (the defaults if omitted)."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        values = parse_config_lines(f.readlines(), source=path)
    logger.info("Loaded %d config values from %s", len(values), path)
    return (base or Config()).with_overrides(values)


def set_config(cfg):
    """Replace the shared instance (CLI --config)."""
    global _shared
    _shared = cfg
    return _shared

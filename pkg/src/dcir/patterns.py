"""Named display-pattern generators and their JSON serialization.

Pattern specs are strings:

    onehot:K       superpixel K fully lit, everything else dark
    uniform:V      every superpixel driven at V in [0, 1]
    gradient-x     drive value (1 + d.x)/2 where d is the unit direction
    gradient-y     from the nominal object point (0, 0, standoff) to the
    gradient-z     superpixel; -y and -z analogous
    complement:S   1 - the pattern described by spec S

The gradient family varies smoothly across the panel, which is what
multiplexed photometric-stereo captures want; complement pairs bracket
a pattern and its photometric negative.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import DataError
from .geometry import DEFAULT_STANDOFF, DisplayModel
from .render import DisplayPattern

_AXES = {"gradient-x": 0, "gradient-y": 1, "gradient-z": 2}


def make_pattern(spec: str, display: DisplayModel,
                 standoff: float = DEFAULT_STANDOFF) -> DisplayPattern:
    """Build a pattern for a display from a generator spec string."""
    name, _, arg = spec.partition(":")
    N = display.n_superpixels
    if name == "onehot":
        try:
            k = int(arg)
        except ValueError:
            raise DataError(f"onehot needs an integer index, got {arg!r}") from None
        if not 0 <= k < N:
            raise DataError(f"onehot index {k} out of range [0, {N})")
        values = np.zeros((N, 3))
        values[k] = 1.0
        return DisplayPattern(values)
    if name == "uniform":
        try:
            v = float(arg)
        except ValueError:
            raise DataError(f"uniform needs a value, got {arg!r}") from None
        if not 0 <= v <= 1:
            raise DataError(f"uniform value {v} outside [0, 1]")
        return DisplayPattern(np.full((N, 3), v))
    if name in _AXES:
        ref = np.array([0.0, 0.0, float(standoff)])
        d = display.superpixel_positions - ref
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        vals = (1.0 + d[:, _AXES[name]]) / 2.0
        return DisplayPattern(np.repeat(vals[:, None], 3, axis=1))
    if name == "complement":
        if not arg:
            raise DataError("complement needs a base pattern spec")
        base = make_pattern(arg, display, standoff)
        return DisplayPattern(1.0 - base.values)
    raise DataError(f"unknown pattern spec {spec!r}")


def olat_split(n: int, fold: int = 6):
    """Deterministic train/test indices: every fold-th image is held out.

    fold = 6 gives the 5:1 ratio used throughout the synthetic suite.
    """
    if n < 1 or fold < 2:
        raise DataError(f"need n >= 1 and fold >= 2, got n={n}, fold={fold}")
    test = [i for i in range(n) if i % fold == 0]
    train = [i for i in range(n) if i % fold != 0]
    return train, test


def save_pattern(path, pattern: DisplayPattern) -> None:
    with open(path, "w") as fp:
        json.dump([[float(v) for v in row] for row in pattern.values], fp)


def load_pattern(path) -> DisplayPattern:
    try:
        with open(path) as fp:
            values = json.load(fp)
    except FileNotFoundError as exc:
        raise DataError(f"missing pattern file {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed pattern file {path}: {exc}") from exc
    return DisplayPattern(np.asarray(values, dtype=float))

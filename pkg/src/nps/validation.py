"""Input validation helpers shared by the estimators and functional API."""

import math
import numbers

import numpy as np

from .exceptions import InvalidArgumentError, StructuralMismatchError


def check_ratio(r, name="ratio"):
    """Return ``r`` as float after checking ``0 < r <= 1``."""
    if isinstance(r, bool) or not isinstance(r, numbers.Real):
        raise InvalidArgumentError(f"{name} must be a real number, got {r!r}")
    r = float(r)
    if not (0.0 < r <= 1.0) or math.isnan(r):
        raise InvalidArgumentError(f"{name} must lie in (0, 1], got {r}")
    return r


def check_positive_int(value, name, minimum=1, maximum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidArgumentError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum or (maximum is not None and value > maximum):
        bound = f"[{minimum}, {maximum}]" if maximum is not None else f">= {minimum}"
        raise InvalidArgumentError(f"{name} must be {bound}, got {value}")
    return value


def check_finite_vector(x, name, length=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional, got shape {x.shape}")
    if length is not None and x.shape[0] != length:
        raise InvalidArgumentError(f"{name} must have length {length}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return x


def kept_count(r, size):
    """Number of elements retained at ratio ``r`` out of ``size``: ceil(r * size).

    ``r * size`` is snapped to the nearest integer when it is within
    floating-point noise of one, so ``0.07 * 100`` keeps 7 and not 8.
    """
    x = r * size
    nearest = round(x)
    if abs(x - nearest) <= 1e-9 * max(1.0, abs(x)):
        return int(nearest)
    return int(math.ceil(x))


def check_same_specs(a, b):
    """Raise ``StructuralMismatchError`` naming the first differing tensor."""
    sa, sb = a.specs, b.specs
    if sa is sb:
        return
    for i, (x, y) in enumerate(zip(sa, sb)):
        if x.name != y.name or x.shape != y.shape:
            raise StructuralMismatchError(
                f"tensor #{i} differs: {x.name}{list(x.shape)} vs {y.name}{list(y.shape)}",
                tensor=x.name,
            )
    if len(sa) != len(sb):
        longer = sa if len(sa) > len(sb) else sb
        extra = longer[min(len(sa), len(sb))].name
        raise StructuralMismatchError(
            f"tensor count differs ({len(sa)} vs {len(sb)}); first unmatched tensor {extra}",
            tensor=extra,
        )

"""Select the compiled kernels when available, else the numpy fallback.

Set ``EKCH_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _fallback

NAME = "python"
_impl = _fallback

if os.environ.get("EKCH_BACKEND", "").lower() != "python":
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        NAME = "compiled"
    except ImportError:
        _impl = _fallback

EKEngine = _impl.EKEngine
NLCHEngine = _impl.NLCHEngine
LCHEngine = _impl.LCHEngine
DivergenceError = _impl.DivergenceError
PositivityError = _impl.PositivityError
POT_POLY = _fallback.POT_POLY
POT_POWER = _fallback.POT_POWER


def potential_args(spec):
    """``(module, kind, params)`` for a potential: compiled kinds when possible."""
    desc = spec.descriptor
    if desc is None:
        return _fallback, _fallback.POT_CALLABLE, spec
    tag, value = desc
    if tag == "poly":
        return _impl, POT_POLY, tuple(float(c) for c in value)
    if tag == "power":
        return _impl, POT_POWER, (float(value),)
    raise ValueError(f"unknown potential descriptor {tag!r}")


def engines(name: str):
    """Module holding the engines of backend ``name`` (``"compiled"`` or ``"python"``)."""
    if name == "python":
        return _fallback
    from . import _core

    return _core

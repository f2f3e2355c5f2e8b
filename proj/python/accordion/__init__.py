"""Adaptive gradient-communication training simulator bindings."""

try:
    from ._core import *  # noqa: F401,F403
    from ._core import __doc__ as _doc
except ImportError:  # in-tree runs put the module next to the build dir
    from _core import *  # noqa: F401,F403
    from _core import __doc__ as _doc

__doc__ = _doc

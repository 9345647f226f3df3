"""Self-triggered min-max MPC over a token-bucket network."""

try:
    from ._stmpc import *  # noqa: F401,F403  (pip-installed layout)
    from ._stmpc import __doc__  # noqa: F401
except ImportError:  # module built by CMake, found on PYTHONPATH
    from _stmpc import *  # noqa: F401,F403
    from _stmpc import __doc__  # noqa: F401

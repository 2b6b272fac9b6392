"""dynkit: numerical and exact tools for flows and maps."""

from .errors import *  # noqa: F401,F403
from .systems import (
    SystemDef,
    build_builtin,
    conservativity_report,
    evaluate,
    jacobian_at,
)

__version__ = "0.1.0"

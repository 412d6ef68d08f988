from .scaling import Estimate, PyKCError, ScalingConfig
from .phase_function import PhaseFunction, parse_expression

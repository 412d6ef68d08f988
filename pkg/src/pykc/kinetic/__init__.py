from .grid import VelocityField, VelocityGrid, write_field_csv
from .kernel import KernelMatrix, build_kernel, gain_row_integral, loss_rate, loss_rate_quadrature
from .collision import (DirectQuadrature, apply_collision, biased_collision_rhs, biased_generator,
                        uniformized_exp)
from .paths import Endpoint, ExpEndpoint, PathBatch, PathFunctional, PathWeight
from .deterministic import FieldTrajectory, solve_feynman_kac, solve_rb_deterministic
from .jump_mc import simulate_jump_paths, solve_rb_jump_mc
from .dyson import DysonHistory, estimate_f1_dyson, sample_dyson_histories
from .backends import Deterministic, Dyson, F1Backend, Jump

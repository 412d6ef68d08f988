from .observable_path import ObservablePath
from .hamiltonian import hamiltonian_value
from .bhj import BHJSolution, hj_action, solve_bhj, solve_bhj_for
from .rate import RateEvaluation, candidate_family, legendre_rate, rate_direct
from .biased import BiasedPath, biased_path_response, solve_biased_path

from .f1_backend import F1Backend
from .jump import Jump
from .dyson import Dyson
from .deterministic import Deterministic

from .dynamics import evolve, evolve_with_snapshots, predict_collision
from .graph import CollisionGraph, collision_graph, cycle_census, tagged_collision_fraction
from .sampling import sample_initial_state
from .state import (BACKGROUND, TAGGED, CollisionEvent, CollisionLog, Particle, SystemState, write_log_csv,
                    write_state_csv)

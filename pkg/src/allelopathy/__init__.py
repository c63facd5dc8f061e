"""Event-driven simulator and analysis suite for the two-species
contact process with frozen (allelopathically blocked) sites."""

from .lattice import (SiteState, Lattice, Neighborhood, Params,
                      build_neighborhood, fraction_occupied, transition_rate,
                      densities, state_counts)
from .graphical import (GraphicalRep, EventTable, build_events,
                        arrow_species_label, ARROW, CROSS, DOT,
                        LABEL_BOTH, LABEL_BLUE, LABEL_RED)
from .forward import (Trajectory, VariantView, run, fold_states, apply_event,
                      make_initial, survival_probability, ForwardStateIndex)

__version__ = "0.1.0"

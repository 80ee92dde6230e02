"""Numerical laboratory for symmetric Dirichlet forms on finite spaces."""

from .core import (ABS_FLOOR, REL_TOL, BeurlingDenyTriple, GraphForm,
                   InternalCheckError, NotEnergyDominantError, ValidationError,
                   WitnessError, algebra_bound_check, beurling_deny, build_form,
                   close, contraction_check, energy, energy_1, energy_measure,
                   form_from_edges, mutual_energy_measure, support,
                   unit_contraction)
from .dominance import (CarreReport, DensityVector, DominanceReport,
                        MinimalityReport, QuotientForm, carre_du_champ_check,
                        change_measure, classify_reference_plus_atom,
                        density_triangle_check, energy_density,
                        is_energy_dominant, is_minimal_edm, minimal_edm)

__version__ = "0.1.0"

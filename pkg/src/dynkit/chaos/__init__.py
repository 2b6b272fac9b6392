"""Chaotic dynamics: Liapunov spectra, dimensions, symbolic dynamics and experiments."""

from .dimension import DimensionEstimate, box_dimension, cantor_endpoints, cloud_csv
from .experiments import (
    ErgodicAverage,
    HenonExperiment,
    OrbitFates,
    SensitivityResult,
    ergodic_average,
    henon_attractor_experiment,
    lorenz_orbit_fates,
    sensitivity_test,
)
from .lyapunov import SPECTRUM_OPTS, SpectrumResult, lyapunov_spectrum
from .symbolic import (
    CantorMembership,
    Rectangle,
    SymbolSequence,
    cantor_membership,
    enumerate_periodic_tent,
    f4,
    h,
    h_inv,
    horseshoe_geometry,
    horseshoe_map,
    itinerary_to_point,
    parse_word,
    sequence_distance,
    shift_map,
    tent,
    tent_itinerary,
    tent_iterate,
    word_sequence,
)

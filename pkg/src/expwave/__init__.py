"""Simulation and verification of blow-up for u_tt = u_xx + e^u in one space dimension."""

from .geometry import BlowupCurve, estimate_T, estimate_curve, lipschitz_certificate, noncharacteristic_test
from .picard import PicardConfig, cone_solve, local_T, picard_solve
from .similarity import SimilarityFrame, energy_trace, equation_residual, lyapunov, to_similarity
from .solver import Truncation, exp_source, solve
from .wavefield import Grid, InitialData, WaveField, make_initial_data, norm_H, wave_group

__all__ = [
    "BlowupCurve", "Grid", "InitialData", "PicardConfig", "SimilarityFrame", "Truncation", "WaveField",
    "cone_solve", "energy_trace", "equation_residual", "estimate_T", "estimate_curve", "exp_source",
    "lipschitz_certificate", "local_T", "lyapunov", "make_initial_data", "noncharacteristic_test",
    "norm_H", "picard_solve", "solve", "to_similarity", "wave_group",
]

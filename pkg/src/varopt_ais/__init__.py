"""Annealed importance sampling for RBM partition functions with
variance-optimal annealing schedules."""
from .ais import AisResult, DegenerateWeightsError, Schedule, ess, run_ais
from .model import GeometricPath, RbmParams, log_pstar
from .oracle import exact_g, exact_log_z
from .schedule import (GTable, ScheduleError, de_solve, decelerate, estimate_g_table,
                       functional_j, linear_schedule, quadrature_schedule, smooth)
from .trainer import BinaryDataset, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AisResult", "BinaryDataset", "DegenerateWeightsError", "GTable", "GeometricPath",
    "RbmParams", "Schedule", "ScheduleError", "TrainConfig", "de_solve", "decelerate",
    "ess", "estimate_g_table", "exact_g", "exact_log_z", "functional_j",
    "linear_schedule", "log_pstar", "quadrature_schedule", "run_ais", "smooth", "train",
]

"""Evolutionary symbolic regression networks for the longitudinal dispersion
coefficient of rivers."""
__version__ = "0.1.0"

from .dataset import COLUMNS, FEATURES, DataError, Sample, clean, filter_outliers, read_csv
from .dimensional import CandidateSet, PiGroup, candidate_set
from .estimator import EsrnRegressor, FormulaRegressor
from .evolution import EsrnConfig, GenerationLog, run, select_best_generation
from .metrics import EvalReport, evaluate
from .network import SymbolicNetwork, decode, forward, train
from .split import Split, ssmd_split

__all__ = [
    "COLUMNS", "FEATURES", "DataError", "Sample", "clean", "filter_outliers", "read_csv",
    "CandidateSet", "PiGroup", "candidate_set",
    "EsrnRegressor", "FormulaRegressor",
    "EsrnConfig", "GenerationLog", "run", "select_best_generation",
    "EvalReport", "evaluate",
    "SymbolicNetwork", "decode", "forward", "train",
    "Split", "ssmd_split",
]

from .io import ingest_csv_dir, load_cohort, save_cohort
from .sequences import Cohort, PressureSequence, TrialKey, label_windows, normalize_levels
from .splits import MODES, SUBJECT_LEVEL, TRIAL_LEVEL, SplitPlan, make_split
from .synth import GaitSignature, SynthConfig, generate_cohort, subject_signature

__all__ = [
    "Cohort", "GaitSignature", "MODES", "PressureSequence", "SUBJECT_LEVEL", "SplitPlan", "SynthConfig",
    "TRIAL_LEVEL", "TrialKey", "generate_cohort", "ingest_csv_dir", "label_windows", "load_cohort",
    "make_split", "normalize_levels", "save_cohort", "subject_signature",
]

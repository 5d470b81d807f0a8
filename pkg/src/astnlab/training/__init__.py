from .loop import (
    STATE_FILE,
    TRACE_COLUMNS,
    FreezeViolation,
    IterationTrace,
    Optimizers,
    TrainConfig,
    TrainResult,
    check_trainable,
    read_trace_csv,
    sample_batch,
    train,
    train_iteration,
    write_trace_csv,
)

__all__ = [
    "FreezeViolation", "IterationTrace", "Optimizers", "STATE_FILE", "TRACE_COLUMNS", "TrainConfig",
    "TrainResult", "check_trainable", "read_trace_csv", "sample_batch", "train", "train_iteration",
    "write_trace_csv",
]

"""Post-hoc calibration, selective prediction and a hysteretic Act/Hold gate.

Thin wrapper over the C++ core in ``calgate._core``.
"""

import json

from ._core import (
    CalibrationMap,
    Dataset,
    Gate,
    GateConfig,
    IoError,
    ValidationError,
    __version__,
    benchmark_tick_latency,
    default_tau_grid,
    ece,
    fit,
    generate,
    generate_uncalibrated_fixture,
    load_dataset,
    pava,
    report_json,
    run_gate,
    save_dataset,
    simulate_sweep,
    softmax,
    split_by_stream,
    sweep,
    topk_accuracy,
)


def report(ds, cal_map, n_bins=15):
    """Reliability report as a dict (nll/brier are None for top-class-only maps)."""
    return json.loads(report_json(ds, cal_map, n_bins))


__all__ = [
    "CalibrationMap",
    "Dataset",
    "Gate",
    "GateConfig",
    "IoError",
    "ValidationError",
    "__version__",
    "benchmark_tick_latency",
    "default_tau_grid",
    "ece",
    "fit",
    "generate",
    "generate_uncalibrated_fixture",
    "load_dataset",
    "pava",
    "report",
    "run_gate",
    "save_dataset",
    "simulate_sweep",
    "softmax",
    "split_by_stream",
    "sweep",
    "topk_accuracy",
]

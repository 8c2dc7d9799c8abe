"""Calibrated grid likelihoods for ensemble cosmology predictions."""

from ._lenslike import (
    MORLET_FAMILY,
    RNG_NAME,
    SCHEMA,
    SIGMA_FLOOR,
    LenslikeError,
    Philox,
    calibrate,
    d4_apply,
    d4_elements,
    format_predictions,
    hartlap_factor,
    infer,
    isotropic_dimension,
    kernel_weights,
    median_knn_distance,
    run_cli,
    scattering,
    score,
    set_threads,
    shrink_covariance,
    tta_average,
)

__all__ = [
    "MORLET_FAMILY",
    "RNG_NAME",
    "SCHEMA",
    "SIGMA_FLOOR",
    "LenslikeError",
    "Philox",
    "calibrate",
    "d4_apply",
    "d4_elements",
    "format_predictions",
    "hartlap_factor",
    "infer",
    "isotropic_dimension",
    "kernel_weights",
    "median_knn_distance",
    "run_cli",
    "scattering",
    "score",
    "set_threads",
    "shrink_covariance",
    "tta_average",
    "write_predictions",
]


def write_predictions(path, records, comment=""):
    """Write (member_id, map_id, truth or None, (om, s8)) rows as a prediction file."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_predictions(list(records), comment))

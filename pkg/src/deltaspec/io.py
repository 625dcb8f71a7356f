"""CSV and JSON serialization with bit-exact float round-trips.

Floats are written with 17 significant digits ("%.17g"), which is enough
for float64 to survive a write/read cycle unchanged. Measures pair a CSV
(columns x_1..x_N, weight, optionally V) with a JSON sidecar carrying
{label, nominal_dim, bbox}. Spectra export as (j, s_j) and counting tables
as (lambda, n_plus, n_minus, n). All writers emit "\n" line endings and
sorted JSON keys so identical inputs yield identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .measures import DiscreteMeasure
from .spectra import PowerLawFit
from .weights import Perturbation

__all__ = [
    "FLOAT_FMT",
    "fit_to_dict",
    "read_measure",
    "write_counting",
    "write_json",
    "write_measure",
    "write_singular_values",
]

FLOAT_FMT = "%.17g"


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


def write_measure(
    m: DiscreteMeasure,
    path: str | Path,
    perturbation: Perturbation | None = None,
) -> Path:
    """Write atoms and weights to CSV plus a JSON sidecar.

    With a perturbation the values go into an extra trailing column ``V``.
    Returns the sidecar path.
    """
    path = Path(path)
    n = m.ambient_dim
    header = [f"x_{i + 1}" for i in range(n)] + ["weight"]
    cols = [m.atoms[:, i] for i in range(n)] + [m.weights]
    if perturbation is not None:
        if perturbation.values.size != m.count:
            raise ValidationError("perturbation length does not match the measure")
        header.append("V")
        cols.append(perturbation.values)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    sidecar = {
        "label": m.label,
        "nominal_dim": m.nominal_dim,
        "bbox": None if m.bbox is None else m.bbox.tolist(),
    }
    side_path = _sidecar_path(path)
    write_json(sidecar, side_path)
    return side_path


def read_measure(path: str | Path) -> tuple[DiscreteMeasure, Perturbation | None]:
    """Read a measure CSV and its sidecar back; inverse of write_measure."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    has_v = header and header[-1] == "V"
    coord_cols = [h for h in header if h.startswith("x_")]
    n = len(coord_cols)
    expected = [f"x_{i + 1}" for i in range(n)] + ["weight"] + (["V"] if has_v else [])
    if header != expected:
        raise ValidationError(f"unexpected measure CSV header {header}")
    data = np.array([[float(v) for v in row] for row in rows])
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValidationError("ragged measure CSV")

    side_path = _sidecar_path(path)
    if not side_path.exists():
        raise ValidationError(f"measure sidecar {side_path} is missing")
    with open(side_path) as fh:
        side = json.load(fh)
    bbox = side.get("bbox")
    m = DiscreteMeasure(
        atoms=data[:, :n],
        weights=data[:, n],
        nominal_dim=float(side["nominal_dim"]),
        label=str(side.get("label", "")),
        bbox=None if bbox is None else np.asarray(bbox, dtype=float),
    )
    p = Perturbation(m, data[:, n + 1]) if has_v else None
    return m, p


def write_singular_values(values: np.ndarray, path: str | Path) -> Path:
    """Write descending singular values as rows (j, s_j)."""
    path = Path(path)
    values = np.asarray(values, dtype=float)
    with open(path, "w") as fh:
        fh.write("j,s_j\n")
        for j, s in enumerate(values, start=1):
            fh.write(f"{j},{_fmt(s)}\n")
    return path


def write_counting(counting: np.ndarray, path: str | Path) -> Path:
    """Write counting samples as rows (lambda, n_plus, n_minus, n)."""
    path = Path(path)
    counting = np.asarray(counting, dtype=float)
    if counting.ndim != 2 or counting.shape[1] != 4:
        raise ValidationError("counting table must have 4 columns")
    with open(path, "w") as fh:
        fh.write("lambda,n_plus,n_minus,n\n")
        for lam, n_p, n_m, n_s in counting:
            fh.write(f"{_fmt(lam)},{int(n_p)},{int(n_m)},{int(n_s)}\n")
    return path


def fit_to_dict(fit: PowerLawFit | None) -> dict | None:
    if fit is None:
        return None
    return {
        "theta": fit.theta,
        "coeff": fit.coeff,
        "window": list(fit.window),
        "r_squared": fit.r_squared,
        "kind": fit.kind,
        "slope": fit.slope,
    }


def write_json(obj, path: str | Path) -> Path:
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path

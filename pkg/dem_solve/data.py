import json
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd

METRICS_COLUMNS = ["epoch", "loss", "rel_change"]
TABLE_COLUMNS = ["method", "mode", "load", "mean_RD", "final_loss", "train_time_s", "diverged", "seed", "status"]
REFINE_COLUMNS = ["dims"] + TABLE_COLUMNS
DEMO1D_COLUMNS = ["delta_u", "psi_ad", "psi_sf"]


def metrics_frame(epoch_losses: Sequence[float]) -> pd.DataFrame:
    """Per-epoch loss table; epoch 0 is the initial loss."""
    loss = pd.Series(list(epoch_losses), dtype="float64")
    prev = loss.shift(1)
    rel = (loss - prev).abs() / prev.abs().where(prev != 0, 1.0)
    return pd.DataFrame({"epoch": range(len(loss)), "loss": loss, "rel_change": rel})[METRICS_COLUMNS]


def rows_frame(rows: List[Dict[str, Any]], columns: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=list(columns))


def write_csv(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    p = Path(path)
    df.to_csv(p, index=False, float_format="%.10g")
    return p


def load_table(path: Union[str, Path]) -> pd.DataFrame:
    """
    Load a CSV artifact.

    Raises:
        FileNotFoundError: If the file does not exist.
    """
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"Table not found: {path}")
    return pd.read_csv(p)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if np.isfinite(v) else str(v)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_report(report: Dict[str, Any], path: Union[str, Path]) -> Path:
    """Write report.json; non-finite floats are stored as the strings 'nan' / 'inf'."""
    p = Path(path)
    p.write_text(json.dumps(_jsonable(report), indent=2), encoding="utf-8")
    return p


def read_report(path: Union[str, Path]) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))

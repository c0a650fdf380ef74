"""
Output Writers
Byte-stable CSV, JSON and GeoJSON writers
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd
from shapely.geometry import mapping

FLOAT_FORMAT = "%.10g"
COORDINATE_DIGITS = 3


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """CSV with fixed float formatting, '\\n' line ends and no index"""
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", na_rep="")
    return Path(path)


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return None if math.isnan(value) or math.isinf(value) else float(FLOAT_FORMAT % value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if value is pd.NA:
        return None
    return value


def write_json(document: Any, path: Path) -> Path:
    """Pretty JSON with sorted keys; NaN becomes null"""
    Path(path).write_text(json.dumps(_plain(document), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return Path(path)


def _rounded(coords):
    if isinstance(coords, (list, tuple)) and coords and isinstance(coords[0], (int, float)):
        return [round(float(c), COORDINATE_DIGITS) for c in coords]
    return [_rounded(c) for c in coords]


def feature(geometry, properties: Dict[str, Any], feature_id: Optional[str] = None) -> Dict[str, Any]:
    """GeoJSON Feature with coordinates rounded to the millimetre"""
    geo = mapping(geometry)
    out = {
        "type": "Feature",
        "geometry": {"type": geo["type"], "coordinates": _rounded(geo["coordinates"])},
        "properties": _plain(properties),
    }
    if feature_id is not None:
        out["id"] = feature_id
    return out


def feature_collection(features: Iterable[Dict[str, Any]]) -> Dict[str, Any]:
    return {"type": "FeatureCollection", "features": list(features)}


def write_geojson(features: List[Dict[str, Any]], path: Path) -> Path:
    return write_json(feature_collection(features), path)

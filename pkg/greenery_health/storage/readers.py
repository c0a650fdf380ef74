"""
Input Readers
Parse every input format into domain records or DataFrames
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from shapely.geometry import LineString, shape

from ..exceptions import GeometryDomainError, IngestionError
from ..models.geo import Access, AreaKind, AreaUnit, GreenRaster, GreenSpaceKind, GreenSpacePolygon, REQUIRED_COVARIATES
from ..models.greenery import StreetImageRecord
from ..models.network import StreetSegment
from ..models.prescriptions import Condition, ConditionList
from ..models.targets import PopulationCell

logger = logging.getLogger(__name__)

RASTER_MAGIC = b"GRNR"
# magic, origin x, origin y, cell size, width, height
RASTER_HEADER = struct.Struct("<4sdddII")

PRESCRIPTION_SCHEMA = {"gp_code": str, "bnf_code": str, "items": float, "quantity": float, "cost": float}
DRUG_SCHEMA = {"bnf_code": str, "name": str}
GP_SCHEMA = {"gp_code": str, "x": float, "y": float, "status": str}
PATIENT_SCHEMA = {"gp_code": str, "area_id": str, "count": float}
IMAGE_SCHEMA = {"image_id": str, "x": float, "y": float, "green_fraction": float}
POPULATION_SCHEMA = {"cell_id": str, "x": float, "y": float, "population": float}
COVARIATE_SCHEMA = {"area_id": str, **{name: float for name in REQUIRED_COVARIATES}}

RESTRICTED_ACCESS_TAGS = {"no", "private", "restricted"}


def read_features(path: Path) -> List[dict]:
    """Features of a GeoJSON FeatureCollection"""
    with open(path, "r", encoding="utf-8") as f:
        document = json.load(f)
    if document.get("type") != "FeatureCollection":
        raise IngestionError(f"{path.name}: expected a GeoJSON FeatureCollection")
    return document.get("features", [])


def _feature_id(feature: dict, row: int) -> str:
    properties = feature.get("properties") or {}
    value = properties.get("id", feature.get("id"))
    if value is None:
        raise IngestionError("feature without an id", [row])
    return str(value)


def read_areas(path: Path, covariates: Optional[pd.DataFrame] = None) -> List[AreaUnit]:
    """
    Areas from GeoJSON; covariates, when given, are attached by area_id

    Raises:
        IngestionError: Duplicate ids or unparseable features (with row numbers)
    """
    lookup: Dict[str, Dict[str, float]] = {}
    if covariates is not None:
        for record in covariates.to_dict(orient="records"):
            lookup[str(record["area_id"])] = {
                k: float(v) for k, v in record.items() if k != "area_id" and pd.notna(v)
            }

    areas, bad, seen = [], [], set()
    for row, feature in enumerate(read_features(path), start=1):
        try:
            area_id = _feature_id(feature, row)
            properties = feature.get("properties") or {}
            if area_id in seen:
                raise IngestionError(f"duplicate area id {area_id}", [row])
            seen.add(area_id)
            areas.append(AreaUnit(
                id=area_id,
                kind=AreaKind(str(properties.get("kind", "ward")).lower()),
                boundary=shape(feature["geometry"]),
                population=float(properties.get("population", 0) or 0),
                covariates=lookup.get(area_id, {}),
            ))
        except (GeometryDomainError, ValueError, KeyError, TypeError) as exc:
            logger.error(f"{path.name} row {row}: {exc}")
            bad.append(row)
    if bad:
        raise IngestionError(f"{path.name}: unusable area features", bad)
    logger.info(f"Loaded {len(areas)} areas from {path.name}")
    return areas


def read_parks(path: Path) -> List[GreenSpacePolygon]:
    """Parks and gardens; access tags no/private map to restricted"""
    parks, bad = [], []
    for row, feature in enumerate(read_features(path), start=1):
        try:
            properties = feature.get("properties") or {}
            access_tag = str(properties.get("access") or "public").strip().lower()
            parks.append(GreenSpacePolygon(
                id=_feature_id(feature, row),
                kind=GreenSpaceKind(str(properties.get("kind", "park")).lower()),
                access=Access.RESTRICTED if access_tag in RESTRICTED_ACCESS_TAGS else Access.PUBLIC,
                boundary=shape(feature["geometry"]),
            ))
        except (GeometryDomainError, ValueError, KeyError, TypeError) as exc:
            logger.error(f"{path.name} row {row}: {exc}")
            bad.append(row)
    if bad:
        raise IngestionError(f"{path.name}: unusable green space features", bad)
    logger.info(f"Loaded {len(parks)} green spaces ({sum(p.is_public for p in parks)} public) from {path.name}")
    return parks


def read_segments(path: Path) -> List[StreetSegment]:
    """Street centerlines; every feature must be a LineString with an id"""
    segments, bad = [], []
    for row, feature in enumerate(read_features(path), start=1):
        try:
            geometry = shape(feature["geometry"])
            if not isinstance(geometry, LineString):
                raise GeometryDomainError(f"expected LineString, got {geometry.geom_type}")
            segments.append(StreetSegment.from_linestring(_feature_id(feature, row), geometry))
        except (GeometryDomainError, ValueError, KeyError, TypeError) as exc:
            logger.error(f"{path.name} row {row}: {exc}")
            bad.append(row)
    if bad:
        raise IngestionError(f"{path.name}: unusable street segments", bad)
    logger.info(f"Loaded {len(segments)} street segments from {path.name}")
    return segments


def read_ascii_grid(path: Path) -> GreenRaster:
    """ESRI ASCII grid; any value > 0 other than NODATA is green"""
    header: Dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as f:
        while True:
            position = f.tell()
            line = f.readline()
            parts = line.split()
            if len(parts) == 2 and parts[0][0].isalpha():
                header[parts[0].lower()] = float(parts[1])
            else:
                f.seek(position)
                break
        values = np.loadtxt(f, ndmin=2)
    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise IngestionError(f"{path.name}: missing '{key}' in grid header")
    cell = header["cellsize"]
    if "xllcorner" in header:
        x0, y0 = header["xllcorner"], header["yllcorner"]
    else:
        x0, y0 = header["xllcenter"] - cell / 2.0, header["yllcenter"] - cell / 2.0
    if values.shape != (int(header["nrows"]), int(header["ncols"])):
        raise IngestionError(f"{path.name}: grid body {values.shape} does not match header")
    nodata = header.get("nodata_value")
    green = values > 0
    if nodata is not None:
        green &= values != nodata
    return GreenRaster(origin=(x0, y0), cell_size=cell, cells=green)


def read_binary_grid(path: Path) -> GreenRaster:
    """Flat binary grid: GRNR header then packed row-major bits, top row first"""
    data = Path(path).read_bytes()
    if len(data) < RASTER_HEADER.size:
        raise IngestionError(f"{path.name}: truncated raster header")
    magic, x0, y0, cell, width, height = RASTER_HEADER.unpack_from(data)
    if magic != RASTER_MAGIC:
        raise IngestionError(f"{path.name}: not a binary green raster")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, offset=RASTER_HEADER.size))
    if bits.size < width * height:
        raise IngestionError(f"{path.name}: {bits.size} bits stored, {width * height} expected")
    return GreenRaster(origin=(x0, y0), cell_size=cell, cells=bits[: width * height].reshape(height, width).astype(bool))


def write_binary_grid(raster: GreenRaster, path: Path):
    header = RASTER_HEADER.pack(RASTER_MAGIC, raster.origin[0], raster.origin[1], raster.cell_size,
                                raster.width, raster.height)
    Path(path).write_bytes(header + np.packbits(raster.cells.ravel()).tobytes())


def read_green_cover(path: Path, cell_size: float = 1.0, bounds=None) -> GreenRaster:
    """Green cover from .asc, .bin or vector GeoJSON (rasterised at `cell_size`)"""
    from ..core.geometry import rasterize_vector_cover

    suffix = Path(path).suffix.lower()
    if suffix == ".asc":
        raster = read_ascii_grid(path)
    elif suffix == ".bin":
        raster = read_binary_grid(path)
    elif suffix in (".geojson", ".json"):
        polygons = [shape(f["geometry"]) for f in read_features(path)]
        if bounds is None:
            xs = [p.bounds for p in polygons]
            bounds = (min(b[0] for b in xs), min(b[1] for b in xs), max(b[2] for b in xs), max(b[3] for b in xs))
        raster = rasterize_vector_cover(polygons, bounds, cell_size)
    else:
        raise IngestionError(f"{Path(path).name}: unsupported green cover format '{suffix}'")
    logger.info(f"Loaded green cover {raster.width}x{raster.height} at {raster.cell_size} m, {raster.green_count} green")
    return raster


def read_table(path: Path, schema: Dict[str, type], label: str, optional: Sequence[str] = ()) -> pd.DataFrame:
    """
    CSV with required columns and types

    Raises:
        IngestionError: Missing columns, or rows whose numeric fields are
            empty (unless listed in `optional`) or do not parse
    """
    frame = pd.read_csv(path, dtype={k: str for k, v in schema.items() if v is str}, keep_default_na=False,
                        na_values={k: [""] for k, v in schema.items() if v is not str})
    missing = [c for c in schema if c not in frame.columns]
    if missing:
        raise IngestionError(f"{label}: missing columns {missing}")
    bad = np.zeros(len(frame), dtype=bool)
    for column, kind in schema.items():
        if kind is float:
            numeric = pd.to_numeric(frame[column], errors="coerce")
            unparsed = numeric.isna() & frame[column].notna()
            if column not in optional:
                unparsed |= numeric.isna()
            bad |= unparsed.to_numpy()
            frame[column] = numeric
        else:
            frame[column] = frame[column].astype(str).str.strip()
    if bad.any():
        raise IngestionError(f"{label}: unparseable numeric values", (np.flatnonzero(bad) + 1).tolist())
    return frame


def read_prescriptions(paths: Dict[str, Path]) -> pd.DataFrame:
    """Monthly practice files stacked with a `month` column, months in order"""
    frames = []
    for month in sorted(paths):
        frame = read_table(paths[month], PRESCRIPTION_SCHEMA, f"prescriptions {month}")
        negative = (frame[["items", "quantity", "cost"]] < 0).any(axis=1)
        if negative.any():
            raise IngestionError(f"prescriptions {month}: negative values", (np.flatnonzero(negative) + 1).tolist())
        frames.append(frame.assign(month=month))
    if not frames:
        return pd.DataFrame(columns=[*PRESCRIPTION_SCHEMA, "month"])
    return pd.concat(frames, ignore_index=True)


def read_images(path: Optional[Path]) -> List[StreetImageRecord]:
    if path is None:
        return []
    frame = read_table(path, IMAGE_SCHEMA, "images")
    out_of_range = ~frame["green_fraction"].between(0.0, 1.0)
    if out_of_range.any():
        raise IngestionError("images: green_fraction outside [0, 1]", (np.flatnonzero(out_of_range) + 1).tolist())
    return [
        StreetImageRecord(image_id, (x, y), fraction)
        for image_id, x, y, fraction in frame[["image_id", "x", "y", "green_fraction"]].itertuples(index=False)
    ]


def read_population_grid(path: Path, cell_size: float) -> List[PopulationCell]:
    """Population cells from CSV centroids (square cells of `cell_size`) or GeoJSON polygons"""
    if Path(path).suffix.lower() in (".geojson", ".json"):
        cells = []
        for row, feature in enumerate(read_features(path), start=1):
            properties = feature.get("properties") or {}
            polygon = shape(feature["geometry"])
            centroid = polygon.centroid
            cell_id = properties.get("cell_id", properties.get("id"))
            if cell_id is None:
                raise IngestionError("population cell without an id", [row])
            cells.append(PopulationCell(str(cell_id), (centroid.x, centroid.y), polygon,
                                        float(properties.get("population", 0) or 0)))
    else:
        frame = read_table(path, POPULATION_SCHEMA, "population grid")
        cells = [
            PopulationCell.square(cell_id, x, y, cell_size, population)
            for cell_id, x, y, population in frame[["cell_id", "x", "y", "population"]].itertuples(index=False)
        ]
    ids = [c.cell_id for c in cells]
    if len(set(ids)) != len(ids):
        raise IngestionError("population grid has duplicate cell ids")
    logger.info(f"Loaded {len(cells)} population cells")
    return cells


def read_condition_list(condition: str, path: Path, drugs: Optional[pd.DataFrame] = None) -> ConditionList:
    """Condition list CSV with a `bnf_code` column and optional `drug_name`"""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if "bnf_code" not in frame.columns:
        raise IngestionError(f"condition list {condition}: missing 'bnf_code' column")
    codes = frame["bnf_code"].str.strip()
    names = frame["drug_name"].str.strip() if "drug_name" in frame.columns else pd.Series([""] * len(frame))
    return ConditionList(
        condition=Condition(condition),
        bnf_codes=frozenset(c for c in codes if c),
        drug_names={c: n for c, n in zip(codes, names) if c},
    )


def read_condition_lists(paths: Dict[str, Path]) -> Dict[str, ConditionList]:
    """All configured lists plus the implicit total list"""
    lists = {name: read_condition_list(name, path) for name, path in sorted(paths.items())}
    lists[Condition.TOTAL.value] = ConditionList(Condition.TOTAL)
    return lists


def read_covariates(path: Path) -> pd.DataFrame:
    return read_table(path, COVARIATE_SCHEMA, "covariates", optional=REQUIRED_COVARIATES)


def months_expected(year: Optional[int]) -> Sequence[str]:
    return [f"{year:04d}-{m:02d}" for m in range(1, 13)] if year else []


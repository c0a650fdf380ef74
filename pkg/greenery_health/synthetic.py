"""
Synthetic Mini-City
Deterministic fixture generator: a square grid of wards with streets, parks,
green cover, street images, a population grid and NHS-style prescribing tables
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
import yaml
from shapely.geometry import LineString, box

from .models.geo import Access, AreaKind, AreaUnit, GreenRaster, GreenSpaceKind, GreenSpacePolygon
from .models.greenery import StreetImageRecord
from .models.network import StreetSegment
from .models.targets import PopulationCell
from .storage.readers import write_binary_grid
from .storage.writers import feature, write_csv, write_geojson

logger = logging.getLogger(__name__)

CITY_ORIGIN = (530000.0, 180000.0)
WARD_SIZE = 100.0
ROAD_OFFSET = 30.0
IMAGE_SPACING = 25.0
PRESCRIPTION_YEAR = 2019
DIABETES_LIST = Path(__file__).parent / "config" / "conditions" / "diabetes.csv"

# condition -> (BNF prefixes written to the condition list, monthly items per patient)
CONDITION_CODES: Dict[str, Tuple[Tuple[str, ...], float]] = {
    "diabetes": (("0601022B0", "0601021M0"), 0.08),
    "hypertension": (("0205051", "0206020"), 0.12),
    "asthma": (("0301011", "0302000"), 0.05),
    "depression": (("040301", "040303"), 0.07),
    "anxiety": (("040102",), 0.02),
    "opioids": (("040702",), 0.03),
}
# prescribed but on no condition list; only the total counts it
OTHER_CODES = (("1001010", 0.30),)
DRUG_NAMES = {
    "0601022B0": "Metformin Hydrochloride",
    "0601021M0": "Gliclazide",
    "0205051": "Ramipril",
    "0206020": "Amlodipine",
    "0301011": "Salbutamol",
    "0302000": "Beclometasone Dipropionate",
    "040301": "Amitriptyline Hydrochloride",
    "040303": "Sertraline Hydrochloride",
    "040102": "Diazepam",
    "040702": "Codeine Phosphate",
    "1001010": "Ibuprofen",
}
UNIT_COST = {code: 0.05 + 0.01 * i for i, code in enumerate(sorted(DRUG_NAMES))}


@dataclass
class MiniCity:
    """In-memory mini-city; `write_mini_city` turns it into input files"""
    seed: int
    wards_per_side: int
    areas: List[AreaUnit]
    raster: GreenRaster
    parks: List[GreenSpacePolygon]
    segments: List[StreetSegment]
    images: List[StreetImageRecord]
    cells: List[PopulationCell]
    leafiness: Dict[str, float]
    covariates: pd.DataFrame
    gps: pd.DataFrame
    patients: pd.DataFrame
    prescriptions: Dict[str, pd.DataFrame] = field(default_factory=dict)

    @property
    def extent(self) -> float:
        return self.wards_per_side * WARD_SIZE


def _ward_id(row: int, col: int) -> str:
    return f"W{row:02d}{col:02d}"


def _paint(cells: np.ndarray, rng: np.random.Generator, rect: Tuple[int, int, int, int], probability: float):
    """Set pixels of a rectangle (relative meters, 1 m cells) green with the given probability"""
    x1, y1, x2, y2 = rect
    height = cells.shape[0]
    rows = slice(height - y2, height - y1)
    cols = slice(x1, x2)
    cells[rows, cols] |= rng.random(cells[rows, cols].shape) < probability


def _road_positions(n: int) -> List[float]:
    return [ROAD_OFFSET + WARD_SIZE * k for k in range(n)]


def _street_segments(n: int) -> List[StreetSegment]:
    """Grid streets split at every crossing, with stubs to the city edge"""
    x0, y0 = CITY_ORIGIN
    stops = [0.0, *_road_positions(n), n * WARD_SIZE]
    segments = []
    for fixed in _road_positions(n):
        for a, b in zip(stops[:-1], stops[1:]):
            segments.append(LineString([(x0 + fixed, y0 + a), (x0 + fixed, y0 + b)]))
            segments.append(LineString([(x0 + a, y0 + fixed), (x0 + b, y0 + fixed)]))
    return [StreetSegment.from_linestring(f"S{i:04d}", line) for i, line in enumerate(segments, start=1)]


def _parks(n: int, rng: np.random.Generator) -> List[Tuple[str, Tuple[int, int, int, int], Access]]:
    """Park rectangles in relative whole meters"""
    parks = []
    for row in range(n):
        for col in range(n):
            if rng.random() < 0.3:
                w, h = (int(v) for v in rng.integers(30, 71, size=2))
                x = col * int(WARD_SIZE) + int(rng.integers(0, int(WARD_SIZE) - w + 1))
                y = row * int(WARD_SIZE) + int(rng.integers(0, int(WARD_SIZE) - h + 1))
                parks.append((f"P{len(parks) + 1:03d}", (x, y, x + w, y + h), Access.PUBLIC))
    size = n * int(WARD_SIZE)
    # one common over 2 ha, one mid-sized park and one private garden
    big = min(150, size // 2)
    parks.append(("P900", (size // 4, size // 4, size // 4 + big, size // 4 + big), Access.PUBLIC))
    parks.append(("P901", (size - 90, 10, size - 10, 90), Access.PUBLIC))
    parks.append(("G902", (10, size - 90, 90, size - 10), Access.RESTRICTED))
    return parks


def mini_city(seed: int = 0, wards_per_side: int = 10, grid_cell_size: float = 40.0, n_gps: int = 5) -> MiniCity:
    """
    Build a mini-city in memory

    Args:
        seed: Seed of every random draw
        wards_per_side: Wards along each side of the square city
        grid_cell_size: Side of the population grid cells
        n_gps: Active practices (a closed one is always added)

    Returns:
        MiniCity
    """
    rng = np.random.default_rng(seed)
    n = wards_per_side
    size = int(n * WARD_SIZE)
    x0, y0 = CITY_ORIGIN

    areas, leafiness, covariates = [], {}, []
    for row in range(n):
        for col in range(n):
            ward_id = _ward_id(row, col)
            leaf = float(rng.uniform(0.02, 0.35))
            leafiness[ward_id] = leaf
            areas.append(AreaUnit(
                id=ward_id,
                kind=AreaKind.WARD,
                boundary=box(x0 + col * WARD_SIZE, y0 + row * WARD_SIZE,
                             x0 + (col + 1) * WARD_SIZE, y0 + (row + 1) * WARD_SIZE),
                population=float(rng.integers(900, 1400)),
            ))
            covariates.append({
                "area_id": ward_id,
                "imd_score": max(0.0, 40.0 - 40.0 * leaf + rng.normal(0.0, 8.0)),
                "building_density": float(np.clip(0.5 - 0.5 * leaf + rng.normal(0.0, 0.1), 0.05, 0.95)),
                "median_age": 35.0 + rng.normal(0.0, 4.0),
                "white_percent": float(np.clip(60.0 + rng.normal(0.0, 10.0), 5.0, 95.0)),
            })

    cells = np.zeros((size, size), dtype=bool)
    for row in range(n):
        for col in range(n):
            rect = (col * int(WARD_SIZE), row * int(WARD_SIZE), (col + 1) * int(WARD_SIZE), (row + 1) * int(WARD_SIZE))
            _paint(cells, rng, rect, leafiness[_ward_id(row, col)])
    parks = []
    for park_id, rect, access in _parks(n, rng):
        _paint(cells, rng, rect, 0.85)
        kind = GreenSpaceKind.GARDEN if access == Access.RESTRICTED else GreenSpaceKind.PARK
        parks.append(GreenSpacePolygon(park_id, kind, access,
                                       box(x0 + rect[0], y0 + rect[1], x0 + rect[2], y0 + rect[3])))
    raster = GreenRaster(origin=CITY_ORIGIN, cell_size=1.0, cells=cells)

    segments = _street_segments(n)
    images = []
    for segment in segments:
        steps = int(segment.length // IMAGE_SPACING)
        for step in range(steps):
            point = segment.geometry.interpolate((step + 0.5) * segment.length / steps)
            col = min(int((point.x - x0) // WARD_SIZE), n - 1)
            row = min(int((point.y - y0) // WARD_SIZE), n - 1)
            fraction = float(np.clip(leafiness[_ward_id(row, col)] + rng.normal(0.0, 0.05), 0.0, 1.0))
            images.append(StreetImageRecord(f"I{len(images) + 1:05d}", (point.x, point.y), fraction))

    side = int(round(size / grid_cell_size))
    population_cells = [
        PopulationCell.square(
            f"C{r:03d}{c:03d}",
            x0 + (c + 0.5) * grid_cell_size,
            y0 + (r + 0.5) * grid_cell_size,
            grid_cell_size,
            float(rng.integers(20, 100)),
        )
        for r in range(side)
        for c in range(side)
    ]

    gps, patients = _practices(areas, rng, n_gps)
    city = MiniCity(
        seed=seed,
        wards_per_side=n,
        areas=areas,
        raster=raster,
        parks=parks,
        segments=segments,
        images=images,
        cells=population_cells,
        leafiness=leafiness,
        covariates=pd.DataFrame(covariates),
        gps=gps,
        patients=patients,
    )
    city.prescriptions = _prescriptions(city, rng)
    logger.info(f"Built mini-city seed {seed}: {len(areas)} wards, {len(segments)} segments, {len(parks)} parks")
    return city


def _practices(areas: List[AreaUnit], rng: np.random.Generator, n_gps: int) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Active practices plus one closed practice, and registered patients per ward"""
    x0, y0 = CITY_ORIGIN
    extent = max(a.boundary.bounds[2] for a in areas) - x0
    locations = rng.uniform(0.1 * extent, 0.9 * extent, size=(n_gps, 2)) + np.array([x0, y0])
    gps = pd.DataFrame({
        "gp_code": [f"G{i:05d}" for i in range(1, n_gps + 1)] + ["C00006"],
        "x": [*locations[:, 0], x0 + 0.5 * extent],
        "y": [*locations[:, 1], y0 + 0.5 * extent],
        "status": ["active"] * n_gps + ["closed"],
    })

    records = []
    for area in areas:
        centroid = np.array([area.boundary.centroid.x, area.boundary.centroid.y])
        weights = np.exp(-np.linalg.norm(locations - centroid, axis=1) / (0.4 * extent))
        registered = int(round(area.population * 0.95))
        counts = np.floor(registered * weights / weights.sum()).astype(int)
        counts[int(np.argmax(weights))] += registered - int(counts.sum())
        for gp_code, count in zip(gps["gp_code"], counts):
            if count > 0:
                records.append({"gp_code": gp_code, "area_id": area.id, "count": float(count)})
    for area in areas[:3]:
        records.append({"gp_code": "C00006", "area_id": area.id, "count": 25.0})
    return gps, pd.DataFrame(records, columns=["gp_code", "area_id", "count"])


def _prescriptions(city: MiniCity, rng: np.random.Generator) -> Dict[str, pd.DataFrame]:
    """Monthly practice-level prescribing driven by catchment deprivation and greenery"""
    covariates = city.covariates.set_index("area_id")
    catchment = city.patients.groupby("gp_code")
    codes = [(prefix, rate / len(prefixes)) for prefixes, rate in CONDITION_CODES.values() for prefix in prefixes]
    codes += list(OTHER_CODES)

    months = {}
    for month in range(1, 13):
        rows = []
        for gp_code, group in catchment:
            patients = float(group["count"].sum())
            share = group["count"].to_numpy() / patients
            imd = float(np.dot(share, covariates.loc[group["area_id"], "imd_score"]))
            leaf = float(np.dot(share, [city.leafiness[a] for a in group["area_id"]]))
            multiplier = (1.0 + 0.01 * imd) * (1.0 - 0.5 * leaf)
            for prefix, rate in codes:
                quantity = round(patients * rate * multiplier * rng.uniform(0.9, 1.1) * 28.0, 1)
                rows.append({
                    "gp_code": gp_code,
                    "bnf_code": prefix.ljust(9, "0") + "AAAAAA",
                    "items": float(max(1, round(quantity / 28.0))),
                    "quantity": quantity,
                    "cost": round(quantity * UNIT_COST[prefix], 2),
                })
        if month == 1:
            rows.append({"gp_code": "Y99999", "bnf_code": "0601022B0AAAAAA", "items": 2.0, "quantity": 56.0, "cost": 3.1})
        months[f"{PRESCRIPTION_YEAR}-{month:02d}"] = pd.DataFrame(
            rows, columns=["gp_code", "bnf_code", "items", "quantity", "cost"]
        )
    return months


def write_mini_city(city: MiniCity, root: Path, bootstrap_samples: int = 50, output_dir: str = "out") -> Path:
    """
    Write every input file and a run configuration under `root`

    Returns:
        Path of the written pipeline.yaml
    """
    root = Path(root)
    (root / "prescriptions").mkdir(parents=True, exist_ok=True)
    (root / "conditions").mkdir(parents=True, exist_ok=True)

    write_geojson([feature(a.boundary, a.to_properties()) for a in city.areas], root / "areas.geojson")
    write_geojson([
        feature(p.boundary, {
            "id": p.id,
            "kind": p.kind.value,
            "access": "private" if p.access == Access.RESTRICTED else None,
        })
        for p in city.parks
    ], root / "parks.geojson")
    write_geojson([feature(s.geometry, {"id": s.id}) for s in city.segments], root / "segments.geojson")
    write_binary_grid(city.raster, root / "green_cover.bin")
    write_csv(pd.DataFrame([
        {"image_id": i.image_id, "x": i.location[0], "y": i.location[1], "green_fraction": i.green_fraction}
        for i in city.images
    ]), root / "images.csv")
    write_csv(pd.DataFrame([
        {"cell_id": c.cell_id, "x": c.centroid[0], "y": c.centroid[1], "population": c.population}
        for c in city.cells
    ]), root / "population.csv")
    write_csv(city.covariates, root / "covariates.csv")
    write_csv(city.gps, root / "gps.csv")
    write_csv(city.patients, root / "patients.csv")
    write_csv(pd.DataFrame({"bnf_code": [c.ljust(9, "0") + "AAAAAA" for c in DRUG_NAMES],
                            "name": list(DRUG_NAMES.values())}), root / "drugs.csv")
    for month, frame in city.prescriptions.items():
        write_csv(frame, root / "prescriptions" / f"{month}.csv")

    condition_lists = {}
    for condition, (prefixes, _) in CONDITION_CODES.items():
        path = root / "conditions" / f"{condition}.csv"
        if condition == "diabetes":
            path.write_text(DIABETES_LIST.read_text(encoding="utf-8"), encoding="utf-8")
        else:
            write_csv(pd.DataFrame({"bnf_code": list(prefixes), "drug_name": [DRUG_NAMES[p] for p in prefixes]}), path)
        condition_lists[condition] = f"conditions/{condition}.csv"

    config = {
        "inputs": {
            "areas": "areas.geojson",
            "green_cover": "green_cover.bin",
            "parks": "parks.geojson",
            "segments": "segments.geojson",
            "images": "images.csv",
            "population_grid": "population.csv",
            "prescriptions": {month: f"prescriptions/{month}.csv" for month in city.prescriptions},
            "drugs": "drugs.csv",
            "gps": "gps.csv",
            "patients": "patients.csv",
            "covariates": "covariates.csv",
            "condition_lists": condition_lists,
        },
        "parameters": {
            "grid_cell_size": float(city.cells[0].cell_polygon.bounds[2] - city.cells[0].cell_polygon.bounds[0]),
            "prescription_year": PRESCRIPTION_YEAR,
            "bootstrap_samples": bootstrap_samples,
            "seed": city.seed,
        },
        "output_dir": output_dir,
    }
    config_path = root / "pipeline.yaml"
    config_path.write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    logger.info(f"Wrote mini-city inputs to {root}")
    return config_path


def build_mini_city(root: Path, seed: int = 0, wards_per_side: int = 10, bootstrap_samples: int = 50) -> Path:
    """Convenience function: generate and write a mini-city, returning its config path"""
    return write_mini_city(mini_city(seed, wards_per_side), root, bootstrap_samples)

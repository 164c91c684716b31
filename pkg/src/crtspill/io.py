"""File formats: population JSON, per-individual trial CSV, run config and reports.

Population JSON::

    {"outcome_mode": "binary" | "real",
     "clusters": [{"members": [{"compliance": "complier",
                                "outcome_table": {"0": [y(0,0), ...], "1": [y(1,0), ...]}}]}]}

Trial CSV: header ``cluster_id,z,d,y``, one row per individual. Other
column names are accepted through :class:`ColumnMap`.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, TextIO, Union

from . import __version__
from .estimation import DECREASE, INCREASE
from .population import Cluster, ComplianceType, IndividualScience, PotentialTable
from .randomization import DEFAULT_ENUMERATION_CAP, ObservedTrial

__all__ = [
    "TrialParseError",
    "ColumnMap",
    "TrialData",
    "RunConfig",
    "fmt",
    "population_to_dict",
    "population_from_dict",
    "read_population",
    "write_population",
    "read_trial_csv",
    "parse_trial_csv",
    "trial_to_csv",
    "rows_to_csv",
    "make_report",
]

PathLike = Union[str, Path]
DIRECTION_ALIASES = {
    INCREASE: INCREASE,
    "beneficial-increases-y": INCREASE,
    DECREASE: DECREASE,
    "beneficial-decreases-y": DECREASE,
}


class TrialParseError(ValueError):
    """Malformed trial CSV; the message names the offending row."""


def fmt(v) -> str:
    """Decimal text with 17 significant digits (integers stay integers)."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


# population JSON

def population_to_dict(pop: PotentialTable) -> dict:
    return {
        "outcome_mode": pop.outcome_mode,
        "clusters": [
            {
                "members": [
                    {
                        "compliance": m.compliance.label,
                        "outcome_table": {"0": list(m.y0), "1": list(m.y1)},
                    }
                    for m in c.members
                ]
            }
            for c in pop.clusters
        ],
    }


def population_from_dict(data: dict) -> PotentialTable:
    try:
        mode = data.get("outcome_mode", "real")
        clusters = []
        for j, c in enumerate(data["clusters"]):
            members = []
            for i, m in enumerate(c["members"]):
                table = m["outcome_table"]
                try:
                    members.append(
                        IndividualScience(ComplianceType.from_label(m["compliance"]), table["0"], table["1"])
                    )
                except (ValueError, TypeError) as e:
                    raise ValueError(f"cluster {j}, member {i}: {e}") from None
            clusters.append(Cluster(tuple(members)))
    except KeyError as e:
        raise ValueError(f"population JSON is missing field {e}") from None
    return PotentialTable(tuple(clusters), mode)


def read_population(path: PathLike) -> PotentialTable:
    with open(path) as fh:
        return population_from_dict(json.load(fh))


def write_population(pop: PotentialTable, path: PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(population_to_dict(pop), fh, indent=2)
        fh.write("\n")


# trial CSV

@dataclass(frozen=True)
class ColumnMap:
    """Names of the four trial columns in a source file."""

    cluster_id: str = "cluster_id"
    z: str = "z"
    d: str = "d"
    y: str = "y"

    @classmethod
    def parse(cls, text: Optional[str]) -> "ColumnMap":
        """From ``"cluster_id=school,z=treat,d=takeup,y=outcome"`` (any subset)."""
        if not text:
            return cls()
        kw = {}
        for part in text.split(","):
            key, sep, name = part.partition("=")
            key, name = key.strip(), name.strip()
            if not sep or key not in cls.__dataclass_fields__ or not name:
                raise ValueError(f"bad column mapping entry {part!r}; expected e.g. 'y=outcome'")
            kw[key] = name
        return cls(**kw)


@dataclass(frozen=True)
class TrialData:
    """A parsed trial plus the source row number (1-based, header = row 1) of each individual."""

    trial: ObservedTrial
    rows: tuple[tuple[int, ...], ...]

    def one_sided_violation_rows(self) -> list[int]:
        return [self.rows[j][i] for j, i in self.trial.one_sided_violations()]


def _bit(text: str, name: str, row: int) -> int:
    t = text.strip()
    try:
        v = float(t)
    except ValueError:
        raise TrialParseError(f"row {row}: {name}={text!r} is not 0 or 1") from None
    if v not in (0.0, 1.0):
        raise TrialParseError(f"row {row}: {name}={text!r} is not 0 or 1")
    return int(v)


def parse_trial_csv(fh: TextIO, columns: Optional[ColumnMap] = None) -> TrialData:
    columns = columns or ColumnMap()
    reader = csv.DictReader(fh)
    if reader.fieldnames is None:
        raise TrialParseError("row 1: file is empty (expected a header)")
    header = [h.strip() for h in reader.fieldnames]
    reader.fieldnames = header
    missing = [c for c in (columns.cluster_id, columns.z, columns.d, columns.y) if c not in header]
    if missing:
        raise TrialParseError(f"row 1: header lacks column(s) {missing}; found {header}")
    order: list[str] = []
    groups: dict[str, dict] = {}
    for row_no, rec in enumerate(reader, start=2):
        if None in rec or any(rec[c] is None for c in header):
            raise TrialParseError(f"row {row_no}: expected {len(header)} fields")
        cid = rec[columns.cluster_id].strip()
        if not cid:
            raise TrialParseError(f"row {row_no}: empty cluster_id")
        z = _bit(rec[columns.z], "z", row_no)
        d = _bit(rec[columns.d], "d", row_no)
        try:
            y = float(rec[columns.y])
        except ValueError:
            raise TrialParseError(f"row {row_no}: y={rec[columns.y]!r} is not a number") from None
        if not math.isfinite(y):
            raise TrialParseError(f"row {row_no}: y must be finite")
        g = groups.get(cid)
        if g is None:
            g = groups[cid] = {"z": z, "z_row": row_no, "d": [], "y": [], "rows": []}
            order.append(cid)
        elif g["z"] != z:
            raise TrialParseError(
                f"row {row_no}: cluster {cid!r} has z={z} but row {g['z_row']} gave z={g['z']}"
            )
        g["d"].append(d)
        g["y"].append(y)
        g["rows"].append(row_no)
    if not order:
        raise TrialParseError("row 2: no data rows")
    zs = [groups[c]["z"] for c in order]
    if all(zs) or not any(zs):
        raise TrialParseError("need at least one treated and one control cluster")
    trial = ObservedTrial(
        tuple(zs),
        tuple(tuple(groups[c]["d"]) for c in order),
        tuple(tuple(groups[c]["y"]) for c in order),
        tuple(order),
    )
    return TrialData(trial, tuple(tuple(groups[c]["rows"]) for c in order))


def read_trial_csv(path: PathLike, columns: Optional[ColumnMap] = None) -> TrialData:
    with open(path, newline="") as fh:
        return parse_trial_csv(fh, columns)


def trial_to_csv(trial: ObservedTrial) -> str:
    ids = trial.cluster_ids or tuple(str(j) for j in range(trial.J))
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["cluster_id", "z", "d", "y"])
    for cid, zj, dj, yj in zip(ids, trial.z, trial.d, trial.y):
        for d, y in zip(dj, yj):
            w.writerow([cid, zj, d, fmt(float(y))])
    return out.getvalue()


def rows_to_csv(rows: list[dict], header: list[str]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(r[h]) for h in header])
    return out.getvalue()


# config and reports

@dataclass
class RunConfig:
    seed: int = 0
    alpha: float = 0.05
    direction: str = INCREASE
    grid_resolution: int = 201
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    output_format: str = "json"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.direction not in DIRECTION_ALIASES:
            raise ValueError(f"direction must be one of {sorted(DIRECTION_ALIASES)}")
        self.direction = DIRECTION_ALIASES[self.direction]
        if self.grid_resolution < 1:
            raise ValueError("grid resolution must be positive")
        if self.enumeration_cap < 1:
            raise ValueError("enumeration cap must be positive")
        if self.output_format not in ("json", "csv"):
            raise ValueError("output format must be json or csv")

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(d.pop("extra"))
        return d


def make_report(command: str, config: RunConfig, result: dict) -> dict:
    return {
        "artifact": {"name": "artifact", "package": "crtspill", "version": __version__},
        "command": command,
        "seed": config.seed,
        "config": config.as_dict(),
        "result": result,
    }

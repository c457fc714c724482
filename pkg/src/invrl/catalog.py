"""Item catalog: per-product demand/lead-time parameters and unit costs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from invrl.env import ItemSpec
from invrl.stochastic import DemandModel, LeadTimeModel


class CatalogError(ValueError):
    pass


REQUIRED = ("id", "b", "mu", "p", "C_o", "C_h", "C_s")
OPTIONAL = ("volume", "capacity", "initial_level")


@dataclass(frozen=True)
class CatalogRecord:
    id: object
    b: float
    mu: float
    p: float
    C_o: float
    C_h: float
    C_s: float
    volume: float = 1.0
    capacity: Optional[int] = None
    initial_level: Optional[int] = None

    def to_item(self) -> ItemSpec:
        return ItemSpec(id=self.id, demand=DemandModel(self.b, self.mu), lead=LeadTimeModel(self.p),
                        cost_order=self.C_o, cost_hold=self.C_h, cost_short=self.C_s,
                        volume=self.volume, capacity=self.capacity,
                        initial_level=self.initial_level)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in REQUIRED}
        if self.volume != 1.0:
            out["volume"] = self.volume
        for k in ("capacity", "initial_level"):
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        return out


class ItemCatalog:
    def __init__(self, records):
        self.records = list(records)
        self._by_id = {}
        for rec in self.records:
            if rec.id in self._by_id:
                raise CatalogError(f"duplicate item id {rec.id!r}")
            self._by_id[rec.id] = rec

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, item_id) -> CatalogRecord:
        try:
            return self._by_id[item_id]
        except KeyError:
            raise CatalogError(f"unknown item id {item_id!r}") from None

    def __contains__(self, item_id):
        return item_id in self._by_id

    def items(self, ids) -> list:
        return [self[i].to_item() for i in ids]

    def to_json(self) -> dict:
        return {"items": [r.to_dict() for r in self.records]}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")


def _number(row, field, idx, positive=False, unit=False, integer=False):
    if field not in row:
        raise CatalogError(f"row {idx}: missing field {field!r}")
    val = row[field]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise CatalogError(f"row {idx}: field {field!r} must be a number, got {val!r}")
    if integer and int(val) != val:
        raise CatalogError(f"row {idx}: field {field!r} must be an integer, got {val!r}")
    if val < 0 or (positive and val <= 0) or (unit and val > 1):
        raise CatalogError(f"row {idx}: field {field!r} out of range: {val!r}")
    return int(val) if integer else float(val)


def parse_record(row: dict, idx: int) -> CatalogRecord:
    if not isinstance(row, dict):
        raise CatalogError(f"row {idx}: expected an object")
    if "id" not in row:
        raise CatalogError(f"row {idx}: missing field 'id'")
    unknown = set(row) - set(REQUIRED) - set(OPTIONAL)
    if unknown:
        raise CatalogError(f"row {idx}: unknown field(s) {sorted(unknown)}")
    rec = CatalogRecord(
        id=row["id"],
        b=_number(row, "b", idx, unit=True),
        mu=_number(row, "mu", idx, positive=True),
        p=_number(row, "p", idx, positive=True, unit=True),
        C_o=_number(row, "C_o", idx),
        C_h=_number(row, "C_h", idx),
        C_s=_number(row, "C_s", idx),
        volume=_number(row, "volume", idx, positive=True) if "volume" in row else 1.0,
        capacity=(_number(row, "capacity", idx, positive=True, integer=True)
                  if row.get("capacity") is not None else None),
        initial_level=(_number(row, "initial_level", idx, integer=True)
                       if row.get("initial_level") is not None else None),
    )
    return rec


def parse_catalog(data) -> ItemCatalog:
    rows = data.get("items") if isinstance(data, dict) else data
    if not isinstance(rows, list):
        raise CatalogError("catalog must be a list of items or an object with an 'items' list")
    return ItemCatalog(parse_record(row, idx) for idx, row in enumerate(rows))


def load_catalog(path=None) -> ItemCatalog:
    """Load a catalog file; with no path, the bundled 50-item dataset."""
    if path is None:
        text = resources.files("invrl").joinpath("data/items.json").read_text()
        source = "bundled catalog"
    else:
        text = Path(path).read_text()
        source = str(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CatalogError(f"{source}: invalid JSON: {exc}") from None
    return parse_catalog(data)

"""Food-class knowledge base: ingredients, nutrition facts, health scoring.

The health value is a pinned 0-100 saturating-linear score over the
per-100g nutrition fields: rewarding protein and fiber, penalizing sugar
and fat.  The formula is arbitrary-but-fixed and isolated in
``health_score`` so it can be swapped without touching the store layout.
Stored records cache the score at write time; loading revalidates it.
"""
from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import UnknownClassError, ValidationError
from .ioutil import dumps_canonical, read_json

STORE_VERSION = 1

NUTRITION_FIELDS = ("calories_kcal", "protein_g", "carbohydrate_g",
                    "fat_g", "fiber_g", "sugar_g")

# macronutrient grams per 100 g can exceed 100 only through rounding slack
MACRO_SUM_TOLERANCE = 5.0


@dataclass(frozen=True)
class NutritionFacts:
    """Per-100g nutrition values; all non-negative and finite."""

    calories_kcal: float
    protein_g: float
    carbohydrate_g: float
    fat_g: float
    fiber_g: float
    sugar_g: float

    def validate(self) -> list[str]:
        problems = []
        for name in NUTRITION_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                problems.append(f"{name} is not finite: {value!r}")
            elif value < 0:
                problems.append(f"{name} is negative: {value}")
        macro = self.protein_g + self.carbohydrate_g + self.fat_g
        if macro > 100.0 + MACRO_SUM_TOLERANCE:
            problems.append(f"protein+carbohydrate+fat = {macro} g per 100 g exceeds "
                            f"{100 + MACRO_SUM_TOLERANCE}")
        return problems

    def scaled(self, factor: float) -> "NutritionFacts":
        return NutritionFacts(**{name: getattr(self, name) * factor
                                 for name in NUTRITION_FIELDS})

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in NUTRITION_FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "NutritionFacts":
        try:
            return cls(**{name: float(d[name]) for name in NUTRITION_FIELDS})
        except KeyError as exc:
            raise ValidationError(f"nutrition facts missing field {exc}") from exc


def _saturate(x: float) -> float:
    return min(x, 1.0)


def health_score(facts: NutritionFacts) -> int:
    """0-100 score: up with protein and fiber, down with sugar and fat.

    score = clamp(round(100 * (0.3*sat(protein/25) + 0.3*sat(fiber/10)
                              - 0.2*sat(sugar/30) - 0.2*sat(fat/40) + 0.4)))
    with sat(x) = min(x, 1).  Monotone in each field in the stated direction.
    """
    raw = (0.3 * _saturate(facts.protein_g / 25.0)
           + 0.3 * _saturate(facts.fiber_g / 10.0)
           - 0.2 * _saturate(facts.sugar_g / 30.0)
           - 0.2 * _saturate(facts.fat_g / 40.0)
           + 0.4)
    return int(min(100, max(0, round(100.0 * raw))))


@dataclass
class FoodRecord:
    """One class entry: ingredients, per-100g facts, cached health value."""

    class_name: str
    display_name: str
    ingredients: list[str]
    nutrition_per_100g: NutritionFacts
    health_value: int = -1

    def __post_init__(self):
        if self.health_value < 0:
            self.health_value = health_score(self.nutrition_per_100g)

    def validate(self) -> list[str]:
        problems = [f"{self.class_name}: {p}" for p in self.nutrition_per_100g.validate()]
        if not self.class_name:
            problems.append("record with empty class_name")
        if not self.ingredients:
            problems.append(f"{self.class_name}: no ingredients listed")
        expected = health_score(self.nutrition_per_100g)
        if self.health_value != expected:
            problems.append(f"{self.class_name}: cached health_value {self.health_value} "
                            f"!= computed {expected}")
        return problems

    def to_dict(self) -> dict:
        return {
            "class_name": self.class_name,
            "display_name": self.display_name,
            "ingredients": list(self.ingredients),
            "nutrition_per_100g": self.nutrition_per_100g.to_dict(),
            "health_value": self.health_value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FoodRecord":
        return cls(
            class_name=d["class_name"],
            display_name=d.get("display_name", d["class_name"]),
            ingredients=list(d.get("ingredients", [])),
            nutrition_per_100g=NutritionFacts.from_dict(d["nutrition_per_100g"]),
            health_value=int(d.get("health_value", -1)),
        )


@dataclass
class FoodStore:
    """Ordered, unique-keyed collection of food records; read-only after load."""

    records: list[FoodRecord] = field(default_factory=list)
    note: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def class_names(self) -> list[str]:
        return [r.class_name for r in self.records]

    def get(self, class_name: str) -> FoodRecord:
        for record in self.records:
            if record.class_name == class_name:
                return record
        raise UnknownClassError(class_name)

    def __contains__(self, class_name: str) -> bool:
        return any(r.class_name == class_name for r in self.records)

    def validate(self) -> None:
        problems = []
        seen = set()
        for record in self.records:
            if record.class_name in seen:
                problems.append(f"duplicate class_name {record.class_name!r}")
            seen.add(record.class_name)
            problems.extend(record.validate())
        if problems:
            raise ValidationError("store validation failed:\n  " + "\n  ".join(problems))

    def to_dict(self) -> dict:
        return {
            "version": STORE_VERSION,
            "note": self.note,
            "records": [r.to_dict() for r in self.records],
        }

    def save(self, path) -> None:
        Path(path).write_text(dumps_canonical(self.to_dict()), encoding="utf-8")


def load_store(path) -> FoodStore:
    """Parse and validate a store file; all violations are reported together."""
    path = Path(path)
    try:
        raw = read_json(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValidationError(f"{path}: cannot parse store file: {exc}") from exc
    if raw.get("version") != STORE_VERSION:
        raise ValidationError(f"{path}: unsupported store version {raw.get('version')}")
    try:
        records = [FoodRecord.from_dict(d) for d in raw["records"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed record: {exc}") from exc
    store = FoodStore(records=records, note=raw.get("note", ""))
    store.validate()
    return store


def nutrition_for_portion(store: FoodStore, class_name: str, portion_g: float) -> NutritionFacts:
    """Linear scaling of the stored per-100g facts to a portion in grams."""
    if portion_g <= 0:
        raise ValueError(f"portion_g must be > 0, got {portion_g}")
    record = store.get(class_name)
    return record.nutrition_per_100g.scaled(portion_g / 100.0)


def default_store_path() -> Path:
    """The bundled starter store (synthetic classes, non-authoritative values)."""
    return Path(importlib.resources.files("foodvision") / "assets" / "starter_store.json")


def load_default_store() -> FoodStore:
    return load_store(default_store_path())

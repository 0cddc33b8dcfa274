import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foodvision.errors import UnknownClassError, ValidationError
from foodvision.nutrition import (
    FoodRecord,
    FoodStore,
    NutritionFacts,
    NUTRITION_FIELDS,
    health_score,
    load_default_store,
    load_store,
    nutrition_for_portion,
)


def facts(**kwargs):
    base = dict(calories_kcal=100.0, protein_g=5.0, carbohydrate_g=10.0,
                fat_g=3.0, fiber_g=2.0, sugar_g=1.0)
    base.update(kwargs)
    return NutritionFacts(**base)


def record(name="dal", **kwargs):
    return FoodRecord(class_name=name, display_name=name.title(),
                      ingredients=["lentils", "spices"],
                      nutrition_per_100g=facts(**kwargs))


nonneg = st.floats(min_value=0.0, max_value=30.0, allow_nan=False)


class TestHealthScore:
    def test_all_zero_facts(self):
        zero = NutritionFacts(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        assert health_score(zero) == 40

    def test_saturated_positives(self):
        best = facts(protein_g=25.0, fiber_g=10.0, sugar_g=0.0, fat_g=0.0)
        assert health_score(best) == 100

    def test_saturated_negatives(self):
        worst = facts(protein_g=0.0, fiber_g=0.0, sugar_g=30.0, fat_g=40.0)
        assert health_score(worst) == 0

    def test_saturation_caps_contributions(self):
        assert health_score(facts(protein_g=25.0)) == health_score(facts(protein_g=250.0))

    @given(base=nonneg, delta=st.floats(min_value=0.01, max_value=20.0))
    @settings(max_examples=60, deadline=None)
    def test_monotone_up_in_protein_and_fiber(self, base, delta):
        for field in ("protein_g", "fiber_g"):
            lo = health_score(facts(**{field: base}))
            hi = health_score(facts(**{field: base + delta}))
            assert hi >= lo

    @given(base=nonneg, delta=st.floats(min_value=0.01, max_value=20.0))
    @settings(max_examples=60, deadline=None)
    def test_monotone_down_in_sugar_and_fat(self, base, delta):
        for field in ("sugar_g", "fat_g"):
            lo = health_score(facts(**{field: base + delta}))
            hi = health_score(facts(**{field: base}))
            assert hi >= lo

    def test_range_clamped(self):
        for f in (facts(), facts(protein_g=25, fiber_g=10),
                  facts(sugar_g=30, fat_g=40, protein_g=0, fiber_g=0)):
            assert 0 <= health_score(f) <= 100


class TestFacts:
    def test_negative_field_invalid(self):
        problems = facts(fat_g=-1.0).validate()
        assert any("fat_g" in p for p in problems)

    def test_macro_sum_bound(self):
        bad = facts(protein_g=50.0, carbohydrate_g=50.0, fat_g=10.0)
        assert any("exceeds" in p for p in bad.validate())

    def test_portion_scaling_linear(self):
        f = facts(calories_kcal=300.0)
        doubled = f.scaled(2.0)
        assert doubled.calories_kcal == 600.0
        for name in NUTRITION_FIELDS:
            assert getattr(doubled, name) == 2 * getattr(f, name)


class TestStore:
    def make_store(self):
        return FoodStore(records=[record("dal"), record("idli", fat_g=0.5)])

    def test_lookup(self):
        store = self.make_store()
        assert store.get("idli").class_name == "idli"
        assert "dal" in store and "dosa" not in store

    def test_unknown_class(self):
        with pytest.raises(UnknownClassError):
            self.make_store().get("pizza")

    def test_duplicate_class_name_rejected(self):
        store = FoodStore(records=[record("dal"), record("dal")])
        with pytest.raises(ValidationError, match="duplicate.*dal"):
            store.validate()

    def test_invalid_record_named_in_error(self, tmp_path):
        store = self.make_store()
        data = store.to_dict()
        data["records"][1]["nutrition_per_100g"]["fat_g"] = -1.0
        path = tmp_path / "store.json"
        path.write_text(json.dumps(data))
        with pytest.raises(ValidationError, match="idli.*fat_g"):
            load_store(path)

    def test_stale_health_value_rejected(self, tmp_path):
        store = self.make_store()
        data = store.to_dict()
        data["records"][0]["health_value"] = 999
        path = tmp_path / "store.json"
        path.write_text(json.dumps(data))
        with pytest.raises(ValidationError, match="health_value"):
            load_store(path)

    def test_all_violations_reported_together(self, tmp_path):
        store = FoodStore(records=[record("dal"), record("dal"), record("idli", fat_g=-2.0)])
        data = store.to_dict()
        path = tmp_path / "store.json"
        path.write_text(json.dumps(data))
        with pytest.raises(ValidationError) as err:
            load_store(path)
        message = str(err.value)
        assert "duplicate" in message and "fat_g" in message

    def test_roundtrip_byte_identical(self, tmp_path):
        store = self.make_store()
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        store.save(first)
        load_store(first).save(second)
        assert first.read_bytes() == second.read_bytes()

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_store(tmp_path / "none.json")


class TestPortion:
    def setup_method(self):
        self.store = FoodStore(records=[record("dal", calories_kcal=300.0)])

    def test_100g_is_identity(self):
        f = nutrition_for_portion(self.store, "dal", 100.0)
        assert f == self.store.get("dal").nutrition_per_100g

    def test_200g_doubles_every_field(self):
        base = self.store.get("dal").nutrition_per_100g
        f = nutrition_for_portion(self.store, "dal", 200.0)
        for name in NUTRITION_FIELDS:
            assert getattr(f, name) == 2 * getattr(base, name)

    def test_50g_halves_calories(self):
        f = nutrition_for_portion(self.store, "dal", 50.0)
        assert f.calories_kcal == 150.0

    def test_additivity(self):
        a = nutrition_for_portion(self.store, "dal", 70.0)
        b = nutrition_for_portion(self.store, "dal", 30.0)
        whole = nutrition_for_portion(self.store, "dal", 100.0)
        for name in NUTRITION_FIELDS:
            assert getattr(a, name) + getattr(b, name) == pytest.approx(getattr(whole, name))

    def test_invalid_portion(self):
        with pytest.raises(ValueError):
            nutrition_for_portion(self.store, "dal", 0.0)

    def test_unknown_class(self):
        with pytest.raises(UnknownClassError):
            nutrition_for_portion(self.store, "nope", 100.0)


class TestBundledStore:
    def test_loads_and_validates(self):
        store = load_default_store()
        assert len(store) == 20
        assert store.get("dal").health_value == health_score(
            store.get("dal").nutrition_per_100g)

    def test_covers_synthetic_class_names(self):
        from foodvision.data import synthetic_class_names

        store = load_default_store()
        assert store.class_names() == synthetic_class_names(20)

    def test_marked_non_authoritative(self):
        store = load_default_store()
        assert "not an authoritative" in store.note

"""End-to-end service round trip: train, serve in-process, classify frames.

Run:  python demos/06_serving_roundtrip.py
(uses the in-process test client; `foodvision serve` runs the same app on a
real port for the browser overlay)
"""
from fastapi.testclient import TestClient

from foodvision.data import (
    SplitSpec, generate_synthetic_dataset, load_split_arrays, split_dataset,
)
from foodvision.models import ModelConfig, build_model
from foodvision.nutrition import load_default_store
from foodvision.service import ServiceConfig, create_app
from foodvision.training import TrainConfig, train

# train a quick 4-class model (first four food classes)
manifest = generate_synthetic_dataset(
    n_classes=4, per_class=24, image_size=48, seed=21, out_dir="demo_out/serve_ds")
train_idx, test_idx = split_dataset(manifest, SplitSpec(train_fraction=0.7, seed=21))
train_data = load_split_arrays(manifest, train_idx, size=48)
test_data = load_split_arrays(manifest, test_idx, size=48)
model = build_model(ModelConfig(family="residual", blocks_per_stage=1, num_classes=4,
                                input_size=(3, 48, 48)), seed=21)
train(model, train_data, test_data, TrainConfig(cycles=4, batch_size=16, seed=21))

store = load_default_store()
app = create_app(model, manifest.class_names, store,
                 config=ServiceConfig(threshold=0.6, stability_k=2,
                                      default_interval_ms=500))

with TestClient(app) as client:
    print("GET /v1/health   ->", client.get("/v1/health").json())
    print("GET /v1/config   ->", client.get("/v1/config").json())

    # poll two frames of the same dish, like the overlay client would
    frame_path, label = manifest.samples[0]
    frame = open(f"demo_out/serve_ds/{frame_path}", "rb").read()
    headers = {"Content-Type": "image/x-portable-pixmap", "X-Session": "demo-cam"}
    for i in range(2):
        result = client.post("/v1/classify", content=frame, headers=headers).json()
        print(f"POST /v1/classify frame {i + 1} -> class {result['class_name']!r} "
              f"conf {result['confidence']:.2f} stable={result['stable']} "
              f"reset={result['reset']} ({result['latency_ms']:.1f} ms)")

    dish = result["class_name"]
    food = client.get(f"/v1/foods/{dish}").json()
    print(f"GET /v1/foods/{dish} -> ingredients {food['ingredients']}, "
          f"health {food['health_value']}/100")
    nutrition = client.get(f"/v1/foods/{dish}/nutrition",
                           params={"portion_g": 250}).json()
    print(f"GET /v1/foods/{dish}/nutrition?portion_g=250 -> "
          f"{nutrition['calories_kcal']:.0f} kcal, "
          f"{nutrition['protein_g']:.1f} g protein")

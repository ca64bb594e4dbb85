"""Walk one synthetic manta through the whole chain.

Run with ``python3 demos/single_pair.py``. The script prints small text
renderings instead of plotting, so it needs nothing beyond the package.
"""
import numpy as np

from sonoptic import (BenchmarkConfig, ObjectType, classify, feature_table, fit, generate_scene,
                      make_benchmark, optic_to_sas, pair_features)
from sonoptic.scenes import random_spec

GLYPHS = {0: ".", 128: "#", 255: "@"}


def show(labels, step=3):
    for row in labels[::step]:
        print("  " + "".join(GLYPHS[int(v)] for v in row[::step]))


rng = np.random.default_rng(1)
pair = generate_scene(random_spec(ObjectType.MANTA, rng), "demo-manta")

print("Real SAS segmentation (@ highlight, # shadow); the sensor looks from the left:")
show(pair.sas_seg.labels)

# Height from shading, turned onto the SAS axis, then re-imaged as sonar
synth = optic_to_sas(pair)
print("\nSAS maps rendered from the optical view:")
show(synth.to_segmentation().labels)

feats = pair_features(pair)
print(f"\nimage quality  psi_sas={feats.psi_sas:.2f}  psi_opt={feats.psi_opt:.2f}")
names = ["theta_max", "theta_min", "skew_s", "skew_t", "hso", "hc0", "hc1", "hc2", "hc3"]
print("feature      " + " ".join(f"{n:>9}" for n in names))
for tag, vec in (("sas", feats.sas), ("optic->sas", feats.optical)):
    print(f"{tag:<12} " + " ".join(f"{v:9.3f}" for v in vec.as_array()))

# A model trained on a separate benchmark labels the pair
train = feature_table(make_benchmark(BenchmarkConfig(n_per_class=30, seed=99)))
model = fit(train.t_sas, train.t_opt, train.labels)
for mode in ("fused", "sas-only", "optic-only"):
    d = classify(model, feats.sas, feats.optical, feats.psi_sas, feats.psi_opt, mode=mode)
    logp = " ".join(f"{v:8.1f}" for v in d.log_densities)
    print(f"{mode:<11} -> {d.label.value}   log p(M C N U) = {logp}")

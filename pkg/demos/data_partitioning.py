"""Synthetic data, heterogeneity, and what trigger poisoning does to a shard.

Prints per-client class histograms as the non-IID degree rises from IID to
single-class, then poisons one client's shard and shows the label shift.
"""

import numpy as np

from trustfed.data import PartitionSpec, PoisonSpec, gen_dataset, partition_non_iid, poison

N_CLASSES = 5
pool = gen_dataset(12000, N_CLASSES, 8, seed=0)
print(f"pool: {len(pool)} samples, {pool.n_features} features, {N_CLASSES} balanced classes")

for phi in (0.0, 0.5, 1.0):
    parts = partition_non_iid(pool, PartitionSpec(5, phi, 400, seed=1))
    print(f"\nnon-IID degree {phi}: per-client class histograms "
          f"(client i's dominant class is i mod {N_CLASSES})")
    for cid, part in enumerate(parts):
        counts = np.bincount(part.y, minlength=N_CLASSES)
        bars = " ".join(f"{c:4d}" for c in counts)
        print(f"  client {cid}: [{bars}]")

print("\npoisoning one shard (a third of samples triggered and relabeled to class 0):")
shard = partition_non_iid(pool, PartitionSpec(5, 0.5, 400, seed=1))[3]
spec = PoisonSpec(target_class=0, trigger_coords=(1, 2), trigger_value=5.0, pdr=0.33)
poisoned, flags = poison(shard, spec, seed=2)
before = np.bincount(shard.y, minlength=N_CLASSES)
after = np.bincount(poisoned.y, minlength=N_CLASSES)
print(f"  labels before: {before.tolist()}")
print(f"  labels after : {after.tolist()}   ({flags.sum()} samples altered)")
print(f"  altered rows carry the trigger: "
      f"{bool((poisoned.x[flags][:, [1, 2]] == 5.0).all())}")
print(f"  untouched rows are bit-identical: "
      f"{bool((poisoned.x[~flags] == shard.x[~flags]).all())}")

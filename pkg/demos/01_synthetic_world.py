"""A tour of the synthetic bird world used throughout the tests and demos.

Each class is a bundle of part/colour attributes. Image features are a noisy
linear image of those attributes, and every image comes with short templated
descriptions that name some of them. Folds hold out whole classes, which the
later demos try to teach to a listener from text alone.
"""
from catdesc.data import SyntheticWorldConfig, generate_synthetic_world, make_folds

world = generate_synthetic_world(SyntheticWorldConfig(seed=42))
print(f"{world.n_classes} classes, {len(world.image_ids)} images, feature dim {world.feature_dim}, "
      f"vocabulary {len(world.vocab)} words\n")

for c in range(3):
    attrs = ", ".join(f"{colour} {part}" for part, colour in world.meta["assignments"][c].items())
    first = world.images_of_class(c)[0]
    print(f"class {c} ({world.class_names[c]}): {attrs}")
    for d in world.descriptions[first][:2]:
        print("   ", " ".join(world.vocab.decode(d)))

folds = make_folds(world, n_folds=5, n_unseen=6, seed=42)
print()
for f in folds:
    print(f"fold {f.fold_id}: unseen {sorted(f.unseen)}  train/val/test images "
          f"{len(f.train)}/{len(f.val)}/{len(f.test)}")

#!/usr/bin/env python3
"""Writes deployment_preds.txt and deployment_truths.txt: one image per confusion
cell count, truth and prediction sharing a box so matching is exact."""
import pathlib

ARQUATA, CHICK, PHASIANUS, OVIS = 22, 23, 18, 20
# (actual, predicted) -> count
CELLS = {
    (ARQUATA, ARQUATA): 662, (ARQUATA, PHASIANUS): 36, (ARQUATA, OVIS): 33,
    (CHICK, CHICK): 302, (CHICK, OVIS): 25,
    (OVIS, OVIS): 13,
}

here = pathlib.Path(__file__).parent
preds, truths = [], []
n = 0
for (actual, predicted), count in CELLS.items():
    for _ in range(count):
        image = f"img{n:04d}"
        truths.append(f"{image} {actual} 100 120 340 400")
        preds.append(f"{image} {predicted} 0.900000 100 120 340 400")
        n += 1
header = "# image_id class_id [confidence] x_min y_min x_max y_max\n"
(here / "deployment_preds.txt").write_text(header + "\n".join(preds) + "\n")
(here / "deployment_truths.txt").write_text(header + "\n".join(truths) + "\n")
print(n)

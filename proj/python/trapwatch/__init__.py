"""Camera-trap evaluation and dataset helpers."""

from ._trapwatch import (
    Letterbox,
    TrapwatchError,
    class_metrics,
    iou,
    letterbox,
    letterbox_box,
    split,
    split_sizes,
    unletterbox_box,
    voc_to_yolo,
    yolo_to_box,
)

__all__ = [
    "Letterbox",
    "TrapwatchError",
    "class_metrics",
    "iou",
    "letterbox",
    "letterbox_box",
    "split",
    "split_sizes",
    "unletterbox_box",
    "voc_to_yolo",
    "yolo_to_box",
]

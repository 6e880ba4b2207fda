import random

import pytest

import trapwatch

DEPLOYMENT_CLASSES = [22, 23, 18, 20]
DEPLOYMENT_COUNTS = [
    [662, 0, 36, 33],
    [0, 302, 0, 25],
    [0, 0, 0, 0],
    [0, 0, 0, 13],
]


def test_class_metrics_on_the_deployment_matrix():
    arquata = trapwatch.class_metrics(DEPLOYMENT_CLASSES, DEPLOYMENT_COUNTS, 22)
    assert (arquata["tp"], arquata["fp"], arquata["fn"], arquata["tn"]) == (662, 0, 69, 340)
    assert arquata["sensitivity"]["percent"] == "90.56%"
    assert arquata["f1"]["percent"] == "95.05%"
    chick = trapwatch.class_metrics(DEPLOYMENT_CLASSES, DEPLOYMENT_COUNTS, 23)
    assert chick["sensitivity"]["percent"] == "92.35%"
    assert chick["f1"]["percent"] == "96.03%"


def test_undefined_ratio_is_not_zero():
    pheasant = trapwatch.class_metrics(DEPLOYMENT_CLASSES, DEPLOYMENT_COUNTS, 18)
    assert pheasant["sensitivity"]["den"] == 0
    assert pheasant["sensitivity"]["value"] is None
    assert pheasant["sensitivity"]["percent"] == "UNDEFINED"


def test_unknown_class_raises_with_code():
    with pytest.raises(trapwatch.TrapwatchError) as info:
        trapwatch.class_metrics(DEPLOYMENT_CLASSES, DEPLOYMENT_COUNTS, 5)
    assert info.value.code == "unknown_class"


def test_iou():
    assert trapwatch.iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
    assert trapwatch.iou((0, 0, 10, 10), (5, 0, 15, 10)) == pytest.approx(50 / 150)
    assert trapwatch.iou((0, 0, 1, 1), (2, 2, 3, 3)) == 0.0


def test_letterbox():
    t = trapwatch.letterbox(1920, 1072)
    assert t.scale == pytest.approx(1 / 3)
    assert (t.scaled_width, t.scaled_height) == (640, 357)
    assert (t.pad_top, t.pad_bottom) == (141, 142)
    rng = random.Random(3)
    for _ in range(200):
        w, h = rng.randint(1, 4096), rng.randint(1, 4096)
        x0, x1 = sorted(rng.uniform(0, w) for _ in range(2))
        y0, y1 = sorted(rng.uniform(0, h) for _ in range(2))
        if x1 - x0 < 1e-6 or y1 - y0 < 1e-6:
            continue
        t = trapwatch.letterbox(w, h)
        back = trapwatch.unletterbox_box(trapwatch.letterbox_box((x0, y0, x1, y1), t), t, w, h)
        assert max(abs(a - b) for a, b in zip(back, (x0, y0, x1, y1))) <= 1.0


def voc(name):
    return (
        "<annotation><filename>IMG_0001.jpg</filename>"
        "<size><width>1000</width><height>800</height><depth>3</depth></size>"
        f"<object><name>{name}</name><bndbox><xmin>100</xmin><ymin>200</ymin>"
        "<xmax>300</xmax><ymax>400</ymax></bndbox></object></annotation>"
    )


def test_voc_to_yolo_round_trip():
    stem, text = trapwatch.voc_to_yolo(voc("Numenius arquata"))
    assert stem == "IMG_0001"
    assert text == "22 0.200000 0.375000 0.200000 0.250000\n"
    assert trapwatch.yolo_to_box(text.strip(), 1000, 800) == pytest.approx((100, 200, 300, 400))


def test_rejected_document_produces_no_labels():
    with pytest.raises(trapwatch.TrapwatchError) as info:
        trapwatch.voc_to_yolo(voc("No Good"))
    assert info.value.code == "excluded_document"


def test_split():
    assert trapwatch.split_sizes(38740) == [30992, 3874, 3874]
    ids = [f"img{i:05d}" for i in range(1000)]
    a = trapwatch.split(ids, 7)
    assert a == trapwatch.split(ids, 7)
    assert [len(p) for p in a] == [800, 100, 100]
    assert sorted(a[0] + a[1] + a[2]) == ids

"""Writes the small image, mock-table, VOC and id fixtures used by the CLI tests."""
import hashlib
import pathlib
import random

from PIL import Image

HERE = pathlib.Path(__file__).resolve().parent


def noise(w, h, seed):
    rng = random.Random(seed)
    img = Image.new("RGB", (w, h))
    img.putdata([(rng.randrange(256), rng.randrange(256), rng.randrange(256)) for _ in range(w * h)])
    return img


def main():
    images = HERE / "images"
    images.mkdir(exist_ok=True)
    rows = []
    for name, (w, h, seed, cls) in {"a": (96, 64, 1, 22), "b": (64, 96, 2, 23), "c": (80, 80, 3, None)}.items():
        path = images / f"{name}.jpg"
        noise(w, h, seed).save(path, "JPEG", quality=90)
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        if cls is not None:
            rows.append(f"{digest} 100 200 300 400 0.9 {cls}")
    (HERE / "images.mock").write_text("# sha256 x1 y1 x2 y2 score class\n" + "\n".join(rows) + "\n")

    voc = HERE / "voc"
    voc.mkdir(exist_ok=True)
    docs = {
        "IMG_0001": (1000, 800, [("Numenius arquata", 100, 200, 300, 400)]),
        "IMG_0002": (1920, 1072, [("Ovis aries", 10, 10, 500, 400), ("Numenius arquata chick", 600, 600, 700, 700)]),
        "IMG_0003": (1920, 1072, [("No Good", 0, 0, 100, 100)]),
    }
    for stem, (w, h, objects) in docs.items():
        body = "".join(
            f"<object><name>{n}</name><difficult>0</difficult><bndbox><xmin>{x0}</xmin><ymin>{y0}</ymin>"
            f"<xmax>{x1}</xmax><ymax>{y1}</ymax></bndbox></object>"
            for n, x0, y0, x1, y1 in objects
        )
        (voc / f"{stem}.xml").write_text(
            f"<annotation><filename>{stem}.JPG</filename><size><width>{w}</width><height>{h}</height>"
            f"<depth>3</depth></size>{body}</annotation>\n"
        )

    (HERE / "ids.txt").write_text("".join(f"img{i:05d}\n" for i in range(1000)))


if __name__ == "__main__":
    main()

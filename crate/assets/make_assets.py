"""Regenerates the bundled demo scene and test masks."""
import json
from pathlib import Path

from PIL import Image, ImageDraw

ROOT = Path(__file__).parent


def mask(size, draw_fn):
    im = Image.new("L", size, 0)
    draw_fn(ImageDraw.Draw(im))
    return im


def masks():
    out = ROOT / "masks"
    shapes = {
        "disk": lambda d: d.ellipse([24, 24, 103, 103], fill=255),
        "ellipse": lambda d: d.ellipse([10, 34, 117, 93], fill=255),
        "rounded_rect": lambda d: d.rounded_rectangle([16, 28, 111, 99], radius=14, fill=255),
        "l_shape": lambda d: d.polygon([(20, 16), (56, 16), (56, 76), (108, 76), (108, 110), (20, 110)], fill=255),
        "figure": lambda d: (
            d.ellipse([44, 10, 83, 49], fill=255),
            d.rounded_rectangle([34, 44, 93, 116], radius=18, fill=255),
        ),
    }
    for name, fn in shapes.items():
        mask((128, 128), fn).save(out / f"{name}.png")


def demo():
    out = ROOT / "demo"
    im = Image.new("L", (64, 64), 255)
    d = ImageDraw.Draw(im)
    d.line([(14, 6), (14, 60)], fill=0, width=2)
    d.rectangle([16, 12, 50, 36], outline=0, width=2)
    for y in (19, 25, 31):
        d.line([(20, y), (46, y)], fill=60, width=1)
    im.convert("RGB").save(out / "image.png")
    mask((64, 64), lambda d: d.rectangle([15, 11, 51, 37], fill=255)).save(out / "mask.png")
    scene = {
        "image": "image.png",
        "bodies": [
            {
                "mask": "mask.png",
                "material": {"young": 1000.0, "poisson": 0.3},
                "density": 1.0,
                "mesh": {"spacing": 4.0, "max_area": 12.0, "min_angle": 20.0},
            }
        ],
        "strokes": [
            {
                "kind": "wind",
                "path": [[6.0, 24.0], [34.0, 20.0], [60.0, 28.0]],
                "strength": 800.0,
                "radius": 16.0,
            }
        ],
        "rigs": [
            {"anchor": [16.5, 12.5], "kind": "fixed"},
            {"anchor": [16.5, 36.5], "kind": "fixed"},
        ],
        "sim": {"frame_count": 8},
        "output": {"dir": "out"},
    }
    (out / "scene.json").write_text(json.dumps(scene, indent=2) + "\n")


if __name__ == "__main__":
    masks()
    demo()

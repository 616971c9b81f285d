import numpy as np
from PIL import Image, ImageDraw


def _disk(rng, size=48, bg=230, fg=(200, 40, 30)):
    img = Image.new("RGB", (size, size), (bg, bg, bg))
    draw = ImageDraw.Draw(img)
    r = int(rng.integers(10, 16))
    cx = int(rng.integers(r + 2, size - r - 2))
    cy = int(rng.integers(r + 2, size - r - 2))
    draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=fg)
    return img


def _stripe(rng, size=48, bg=230, fg=(30, 60, 200)):
    img = Image.new("RGB", (size, size), (bg, bg, bg))
    draw = ImageDraw.Draw(img)
    width = int(rng.integers(4, 7))
    phase = int(rng.integers(0, width))
    for x in range(phase, size, 2 * width):
        draw.rectangle([x, 0, x + width - 1, size - 1], fill=fg)
    return img


def make_image_folder(root, n_per_class=12, seed=0, bg=230, n_normal=None, n_anomaly=None,
                      disk_color=(200, 40, 30), stripe_color=(30, 60, 200)):
    """Two-class toy folder: 'disk' (the normal class) and 'stripe'."""
    rng = np.random.default_rng(seed)
    counts = {"disk": n_normal or n_per_class, "stripe": n_anomaly or n_per_class}
    for cls, maker, color in (("disk", _disk, disk_color), ("stripe", _stripe, stripe_color)):
        d = root / cls
        d.mkdir(parents=True, exist_ok=True)
        for i in range(counts[cls]):
            maker(rng, bg=bg, fg=color).save(d / f"{cls}_{i:03d}.png")
    return root



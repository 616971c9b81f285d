"""Image encoders. Built-in encoders are deterministic and fully local:

- ``hist{B}``: per-channel B-bin color histograms of the 64x64 RGB resize
  (dimension 3B).
- ``patchproj{D}``: 32x32 grayscale pixels through a fixed Gaussian
  projection (seeded from the encoder id) and tanh, dimension D.
- ``torchvision:{name}``: a pretrained torchvision backbone's pooled
  features; requires torch plus locally cached weights.
"""
import hashlib
import re

import numpy as np
from PIL import Image


class EncoderLoadError(Exception):
    pass


def _id_seed(encoder_id):
    return int.from_bytes(hashlib.sha256(encoder_id.encode()).digest()[:8], "little")


class HistogramEncoder:
    def __init__(self, bins):
        self.bins = bins
        self.dim = 3 * bins

    def encode(self, image):
        rgb = np.asarray(image.convert("RGB").resize((64, 64), Image.BILINEAR), dtype=np.float64)
        feats = []
        for c in range(3):
            hist, _ = np.histogram(rgb[:, :, c], bins=self.bins, range=(0.0, 256.0))
            feats.append(hist / rgb[:, :, c].size)
        return np.concatenate(feats)


class PatchProjectionEncoder:
    def __init__(self, dim, encoder_id):
        self.dim = dim
        rng = np.random.default_rng(_id_seed(encoder_id))
        self._proj = rng.standard_normal((dim, 32 * 32)) / np.sqrt(32 * 32)

    def encode(self, image):
        gray = np.asarray(image.convert("L").resize((32, 32), Image.BILINEAR), dtype=np.float64)
        flat = (gray.ravel() - 127.5) / 127.5
        return np.tanh(self._proj @ flat)


class TorchvisionEncoder:
    def __init__(self, name):
        try:
            import torch
            import torchvision.models as models
            import torchvision.transforms as transforms
        except ImportError as exc:
            raise EncoderLoadError(f"torchvision unavailable: {exc}") from exc
        try:
            factory = getattr(models, name)
            self._model = factory(weights="DEFAULT")
        except Exception as exc:  # missing weights cache, unknown model
            raise EncoderLoadError(f"cannot load torchvision model {name!r}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self._pre = transforms.Compose([
            transforms.Resize(256),
            transforms.CenterCrop(224),
            transforms.ToTensor(),
            transforms.Normalize([0.485, 0.456, 0.406], [0.229, 0.224, 0.225]),
        ])
        self.dim = None  # discovered on first encode

    def encode(self, image):
        with self._torch.no_grad():
            x = self._pre(image.convert("RGB")).unsqueeze(0)
            out = self._model(x).squeeze(0).numpy().astype(np.float64)
        self.dim = out.shape[0]
        return out


def load_encoder(encoder_id):
    m = re.fullmatch(r"hist(\d+)", encoder_id)
    if m:
        return HistogramEncoder(int(m.group(1)))
    m = re.fullmatch(r"patchproj(\d+)", encoder_id)
    if m:
        return PatchProjectionEncoder(int(m.group(1)), encoder_id)
    if encoder_id.startswith("torchvision:"):
        return TorchvisionEncoder(encoder_id.split(":", 1)[1])
    raise EncoderLoadError(f"unknown encoder id {encoder_id!r}")

"""Image-folder to embedding-file exporter: produces index-aligned base
and aux feature files (plus a one-vs-all evaluation sidecar) in the wire
format the driftguard pipeline consumes."""
from .encoders import EncoderLoadError, load_encoder
from .export import ExportManifest, export

__version__ = "0.1.0"
__all__ = ["EncoderLoadError", "ExportManifest", "export", "load_encoder"]

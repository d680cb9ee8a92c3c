"""HTTP sidecar serving a biomedical NER model."""

__version__ = "0.1.0"

from .app import create_app  # noqa: F401

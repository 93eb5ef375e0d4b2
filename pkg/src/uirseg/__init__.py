"""Click-driven region segmentation and captioning workbench."""

__version__ = "0.1.0"

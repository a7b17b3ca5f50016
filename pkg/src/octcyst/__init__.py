"""Vendor-independent intra-retinal cyst segmentation for SD-OCT B-scans."""

__version__ = "0.1.0"

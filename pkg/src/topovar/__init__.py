"""Grid-based variations of curvature actions under topology change."""

__version__ = "0.1.0"

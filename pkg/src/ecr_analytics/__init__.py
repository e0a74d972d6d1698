"""Video-derived analytics for room-clearing drills.

Detection streams go in; tracks, map trajectories, gaze triangles, drill
metrics and hierarchical team scores come out.
"""

__version__ = "0.1.0"

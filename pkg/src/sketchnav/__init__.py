"""Interactive 2D robot-navigation simulator: language + sketch constraints,
task-mode switching, and a soft actor-critic policy over merged laser scans."""

__version__ = "0.1.0"

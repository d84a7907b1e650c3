"""Self-calibrating multi-radar tracking with slotted track-to-track fusion."""
__version__ = "0.1.0"

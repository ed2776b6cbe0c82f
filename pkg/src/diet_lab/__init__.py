"""diet-lab: index-target self-supervised training at desk scale."""

__version__ = "0.1.0"

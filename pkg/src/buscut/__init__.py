"""Agent-based bus network simulation for route-removal and passenger-group dissatisfaction studies."""
__version__ = "0.1.0"

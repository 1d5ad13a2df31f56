__version__ = "0.1.0"

__all__ = [
    "config",
    "geometry",
    "model",
    "solver",
    "fidelity",
    "errors",
    "experiments",
    "output",
]

__all__ = [
    "grid",
    "graph",
    "diffengine",
    "models",
    "materials",
    "assembly",
    "training",
    "detection",
    "reference",
    "evaluate",
    "vtk",
    "config",
    "data",
    "pipeline",
    "cli",
    "errors",
    "utils",
]

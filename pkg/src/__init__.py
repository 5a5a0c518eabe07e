"""lightstack - light fields and optical forces in 1D stacks of thin scatterers."""

__version__ = "1.0.0"

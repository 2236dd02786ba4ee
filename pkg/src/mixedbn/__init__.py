"""Mixed local/nonlocal Brezis-Nirenberg experiments on cubic lattices."""

__version__ = "0.1.0"

"""Phase-field Kohn-Vogelius reconstruction of cavities in elastic plates."""

__version__ = "0.1.0"

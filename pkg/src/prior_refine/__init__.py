"""Two-stage PDE surrogate: operator-network prior + diffusion refinement."""

__version__ = "0.1.0"

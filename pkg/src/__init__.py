"""ReflectedDiffusion - score-based generative modeling with reflected Brownian motion on the hypercube."""

__version__ = "0.1.0"

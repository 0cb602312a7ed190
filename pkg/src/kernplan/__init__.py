"""kernplan: kernel-regression diffusion trajectory planning with safety
shielding, a model-based baseline, and a parking benchmark harness."""

__version__ = "0.1.0"

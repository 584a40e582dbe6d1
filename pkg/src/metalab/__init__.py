"""metalab: metastability of randomly perturbed piecewise-expanding interval maps."""
__version__ = "0.1.0"

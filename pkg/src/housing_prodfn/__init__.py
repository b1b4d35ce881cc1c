"""Housing production function estimation under unobserved land productivity."""

__version__ = "0.1.0"

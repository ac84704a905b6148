"""Structure theory of non-compact symmetric spaces and numerical checks of
divergence-free duality estimates on them."""

__version__ = "0.1.0"

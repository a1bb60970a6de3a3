"""Pretzel: private linear classification for email.

A two-party protocol suite where a provider's proprietary linear model
classifies a client's email without the provider seeing the email or
the client seeing the model: packed additively-homomorphic dot products
finished inside a small garbled circuit.
"""

__version__ = "0.1.0"

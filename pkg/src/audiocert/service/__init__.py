"""HTTP front end for the certification package."""
from .app import app, serve

__all__ = ["app", "serve"]

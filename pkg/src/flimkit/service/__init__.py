"""HTTP service wrapping the toolkit; see app.app for the FastAPI instance."""

from .app import app

__all__ = ["app"]

"""FastAPI service wrapping the simulator, reconstruction, and experiment runners."""

from .app import app, create_app  # noqa: F401

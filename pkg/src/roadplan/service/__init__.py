"""HTTP face of the toolkit: FastAPI app plus request/response schemas."""

from .app import app, create_app, parking_curb_obstacles

__all__ = ["app", "create_app", "parking_curb_obstacles"]

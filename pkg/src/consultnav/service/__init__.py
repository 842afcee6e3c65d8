from .app import create_app
from .registry import SessionRegistry

__all__ = ["create_app", "SessionRegistry"]

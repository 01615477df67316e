"""HTTP service exposing training, evaluation, baselines, and live sessions."""

from .app import create_app

__all__ = ["create_app"]

"""Extractive-QA transformer microservice for the viqa reader protocol."""

__version__ = "0.1.0"

from .model import ServiceConfig, Span, SpanModel
from .service import create_app, serve

__all__ = ["ServiceConfig", "Span", "SpanModel", "create_app", "serve", "__version__"]

"""HTTP wrapper exposing monocular depth models behind a uniform protocol."""

from .models import BUILTIN_MODELS, ModelInfo, ScriptedModel, load_model
from .server import ServerConfig, build_server

__version__ = "0.1.0"

"""Reference neural next-token provider for the timeline-scoring wire protocol."""

from .model import ModelConfig, TinyCausalLM, load_checkpoint, save_checkpoint
from .server import ServerConfig, handle_request, serve, serve_stream
from .train import load_timelines, pack_rows, train_reference

__version__ = "0.1.0"

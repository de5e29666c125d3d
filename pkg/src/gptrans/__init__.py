"""GPTrans: a graph transformer that co-updates node and edge embeddings.

The attention module propagates information along three paths per block:
biased node-to-node attention, a write-back of the attention map into the
edge stream, and a softmax-weighted aggregation of edges back into nodes.
Everything runs on a small numpy-backed tensor engine with reverse-mode
differentiation; see the README for the CLI and the acceptance suite.
"""

__version__ = "0.1.0"

from .embedding import Vocab
from .graphs import Graph, batch_graphs, load_jsonl, save_jsonl
from .model import ModelConfig, count_params, estimate_flops, init_model, model_forward, preset
from .tensor import Tape, Tensor
from .train import TrainSettings, evaluate, train_loop

__all__ = [
    "__version__",
    "Graph",
    "Vocab",
    "ModelConfig",
    "Tape",
    "Tensor",
    "TrainSettings",
    "batch_graphs",
    "count_params",
    "estimate_flops",
    "evaluate",
    "init_model",
    "load_jsonl",
    "model_forward",
    "preset",
    "save_jsonl",
    "train_loop",
]

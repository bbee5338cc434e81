"""Network core: layer primitives, model assembly, and checkpoint I/O."""

from .checkpoint import expected_shapes, load_checkpoint, save_checkpoint
from .layers import (attention_pool, average_pool, batchnorm_forward, bce_loss,
                     bce_grad_logits, bilstm_forward, conv1d_forward,
                     embed_forward, head_forward, lstm_forward,
                     maxpool1d_forward, sigmoid)
from .model import (ForwardCache, ModelConfig, ModelParams, backward,
                    count_params, expected_param_counts, forward, init_params,
                    layer_param_counts, loss_forward)

__all__ = [
    "ForwardCache", "ModelConfig", "ModelParams",
    "attention_pool", "average_pool", "backward", "batchnorm_forward",
    "bce_grad_logits", "bce_loss", "bilstm_forward", "conv1d_forward",
    "count_params", "embed_forward", "expected_param_counts",
    "expected_shapes", "forward", "head_forward", "init_params",
    "layer_param_counts", "load_checkpoint", "loss_forward", "lstm_forward",
    "maxpool1d_forward", "save_checkpoint", "sigmoid",
]

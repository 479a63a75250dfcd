from .checkpoint import load_tensors, save_tensors
from .functional import (
    argmax,
    avg_pool2d,
    bilinear_upsample,
    conv2d,
    dropout,
    instance_norm,
    leaky_relu,
    pixel_shuffle,
    pixel_unshuffle,
    softmax,
)
from .optim import Adam, AdamState, adam_step
from .tensor import (
    Tensor,
    as_tensor,
    backward,
    concat,
    grad,
    l2_norm,
    mean,
    no_grad,
    reshape,
    set_grad_enabled,
    sum_,
)

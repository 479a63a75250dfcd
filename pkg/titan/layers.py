# titan/layers.py

import numpy as np

from autodiff import Tensor, conv2d, instance_norm
from autodiff.functional import normalize_with
from exceptions import ConfigurationError


class Module:
    """
    Base for network parts; attributes holding Tensors with ``requires_grad`` are
    parameters, attributes holding Modules are children, ``_buffers`` hold state.
    """

    def __init__(self):
        object.__setattr__(self, "_parameters", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, Tensor) and value.requires_grad:
            self._parameters[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array):
        self._buffers[name] = np.asarray(array)

    def named_parameters(self, prefix=""):
        for name, param in self._parameters.items():
            yield prefix + name, param
        for name, module in self._modules.items():
            yield from module.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix=""):
        for name, buffer in self._buffers.items():
            yield prefix + name, buffer
        for name, module in self._modules.items():
            yield from module.named_buffers(f"{prefix}{name}.")

    def parameters(self):
        return dict(self.named_parameters())

    def state_dict(self):
        state = {name: param.data for name, param in self.named_parameters()}
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state):
        """Copy arrays into parameters and buffers; every entry must be present with matching shape."""
        targets = dict(self.named_parameters())
        buffers = {}
        self._collect_buffer_owners(buffers, "")
        expected = set(targets) | set(buffers)
        missing = expected - set(state)
        if missing:
            raise ConfigurationError(f"state is missing entries: {sorted(missing)[:5]}")
        for name in expected:
            value = np.asarray(state[name])
            if name in targets:
                param = targets[name]
                if value.shape != param.shape:
                    raise ConfigurationError(f"{name}: shape {value.shape} does not match {param.shape}")
                param.data = value.astype(param.dtype).copy()
            else:
                owner, key = buffers[name]
                owner._buffers[key] = value.astype(owner._buffers[key].dtype).copy()

    def _collect_buffer_owners(self, out, prefix):
        for key in self._buffers:
            out[prefix + key] = (self, key)
        for name, module in self._modules.items():
            module._collect_buffer_owners(out, f"{prefix}{name}.")

    def train(self, mode=True):
        object.__setattr__(self, "training", mode)
        for module in self._modules.values():
            module.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for module in modules:
            self.append(module)

    def append(self, module):
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index):
        return self._items[index]


def init_weights(rng, shape, init, dtype, gain=0.02):
    """Draw a conv kernel: ``normal`` (std ``gain``), ``he`` or ``zeros``."""
    if init == "zeros":
        return np.zeros(shape, dtype=dtype)
    if init == "normal":
        return (rng.standard_normal(shape) * gain).astype(dtype)
    if init == "he":
        fan_in = int(np.prod(shape[1:]))
        return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
    raise ConfigurationError(f"unknown weight init '{init}'")


class Conv2d(Module):
    def __init__(
        self,
        in_channels,
        out_channels,
        kernel_size,
        rng,
        stride=1,
        dilation=1,
        padding=None,
        init="normal",
        dtype=np.float32,
    ):
        super().__init__()
        if padding is None:
            # "same" size for odd kernels at stride 1
            padding = dilation * (kernel_size - 1) // 2
        self.stride, self.dilation, self.padding = stride, dilation, padding
        self.kernel_size = kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.weight = Tensor(init_weights(rng, shape, init, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    def forward(self, x):
        return conv2d(x, self.weight, self.bias, self.stride, self.dilation, self.padding)


class InstanceNorm(Module):
    """
    Instance normalisation that also tracks running per-channel statistics.

    Training normalises each (sample, channel) plane by its own statistics; in
    eval mode the running statistics are used, which keeps inference independent
    of the input width.
    """

    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x):
        if not self.training:
            return normalize_with(x, self._buffers["running_mean"], self._buffers["running_var"], self.eps)
        plane_mean = x.data.mean(axis=(2, 3))
        plane_var = x.data.var(axis=(2, 3))
        m = self.momentum
        for key, batch_value in (("running_mean", plane_mean), ("running_var", plane_var)):
            buffer = self._buffers[key]
            self._buffers[key] = ((1.0 - m) * buffer + m * batch_value.mean(axis=0)).astype(buffer.dtype)
        return instance_norm(x, self.eps)

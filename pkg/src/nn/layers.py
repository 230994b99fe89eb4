"""Layers with hand-written reverse-mode gradients.

Every layer caches what its backward pass needs during forward, so backward
must follow a forward call on the same layer. Stacked matmuls run per batch
element, which keeps a batched eval forward bit-identical to single-row ones.
"""
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from ..core.exceptions import DegenerateBatchException, LayerStateException, ShapeException

Tensor = npt.NDArray[np.float64]


class Layer:
    name: str = "layer"

    def __init__(self):
        self.training = True
        self.params: Dict[str, Tensor] = {}
        self.grads: Dict[str, Tensor] = {}
        self.buffers: Dict[str, Tensor] = {}

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def backward(self, grad_out: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def train(self, mode: bool = True) -> "Layer":
        self.training = mode
        return self

    def eval(self) -> "Layer":
        return self.train(False)

    def zero_grad(self):
        for key, value in self.params.items():
            self.grads[key] = np.zeros_like(value)

    def _register(self, name: str, value: Tensor):
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)


def kaiming_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> Tensor:
    """Uniform in +-1/sqrt(fan_in): Kaiming-uniform with negative slope sqrt(5)."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv1d(Layer):
    """Unpadded 1D convolution whose stride equals its kernel size (non-overlapping windows)."""

    name = "conv1d"

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 4, stride: int = 4,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        if stride != kernel_size:
            raise ShapeException(f"Conv1d supports stride == kernel_size only, got k={kernel_size}, s={stride}")
        rng = rng or np.random.default_rng()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        fan_in = in_channels * kernel_size
        self._register("weight", kaiming_uniform(rng, (out_channels, in_channels, kernel_size), fan_in))
        self._register("bias", kaiming_uniform(rng, (out_channels,), fan_in))
        self._cols: Optional[Tensor] = None
        self._input_shape: Optional[Tuple[int, ...]] = None

    def _check(self, x: Tensor):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeException(f"Conv1d expects (n, {self.in_channels}, L), got {x.shape}")
        if x.shape[2] % self.kernel_size != 0:
            raise ShapeException(f"Conv1d input length {x.shape[2]} not divisible by {self.kernel_size}")

    def forward(self, x: Tensor) -> Tensor:
        self._check(x)
        n, cin, length = x.shape
        k = self.kernel_size
        out_len = length // k
        cols = x.reshape(n, cin, out_len, k).transpose(0, 2, 1, 3).reshape(n, out_len, cin * k)
        kernel = self.params["weight"].reshape(self.out_channels, cin * k).T
        out = np.matmul(cols, kernel) + self.params["bias"]
        if self.training:
            self._cols = cols
            self._input_shape = x.shape
        return np.ascontiguousarray(out.transpose(0, 2, 1))

    def backward(self, grad_out: Tensor) -> Tensor:
        if self._cols is None:
            raise LayerStateException("Conv1d.backward called before a training-mode forward")
        n, cin, length = self._input_shape
        k = self.kernel_size
        out_len = length // k
        if grad_out.shape != (n, self.out_channels, out_len):
            raise ShapeException(f"Conv1d grad shape {grad_out.shape} != {(n, self.out_channels, out_len)}")

        g = grad_out.transpose(0, 2, 1)
        kernel = self.params["weight"].reshape(self.out_channels, cin * k)
        grad_kernel = np.matmul(self._cols.transpose(0, 2, 1), g).sum(axis=0)
        self.grads["weight"] = self.grads["weight"] + grad_kernel.T.reshape(self.out_channels, cin, k)
        self.grads["bias"] = self.grads["bias"] + grad_out.sum(axis=(0, 2))

        grad_cols = np.matmul(g, kernel)
        return np.ascontiguousarray(grad_cols.reshape(n, out_len, cin, k).transpose(0, 2, 1, 3).reshape(n, cin, length))


class BatchNorm1d(Layer):
    """Per-channel normalisation over batch and length, with affine scale and shift."""

    name = "batchnorm1d"

    def __init__(self, num_features: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self._register("gamma", np.ones(num_features))
        self._register("beta", np.zeros(num_features))
        self.buffers["running_mean"] = np.zeros(num_features)
        self.buffers["running_var"] = np.ones(num_features)
        self._cache: Optional[Tuple[Tensor, Tensor]] = None

    @staticmethod
    def _expand(v: Tensor) -> Tensor:
        return v[None, :, None]

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.num_features:
            raise ShapeException(f"BatchNorm1d expects (n, {self.num_features}, L), got {x.shape}")
        gamma, beta = self._expand(self.params["gamma"]), self._expand(self.params["beta"])

        if not self.training:
            mean = self._expand(self.buffers["running_mean"])
            var = self._expand(self.buffers["running_var"])
            return (x - mean) / np.sqrt(var + self.eps) * gamma + beta

        count = x.shape[0] * x.shape[2]
        if count < 2:
            raise DegenerateBatchException(f"BatchNorm1d needs at least 2 values per channel, got {count}")
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - self._expand(mean)) * self._expand(inv_std)

        m = self.momentum
        self.buffers["running_mean"] = (1 - m) * self.buffers["running_mean"] + m * mean
        self.buffers["running_var"] = (1 - m) * self.buffers["running_var"] + m * var * count / (count - 1)
        self._cache = (x_hat, inv_std)
        return x_hat * gamma + beta

    def backward(self, grad_out: Tensor) -> Tensor:
        if self._cache is None:
            raise LayerStateException("BatchNorm1d.backward called before a training-mode forward")
        x_hat, inv_std = self._cache
        if grad_out.shape != x_hat.shape:
            raise ShapeException(f"BatchNorm1d grad shape {grad_out.shape} != {x_hat.shape}")
        count = grad_out.shape[0] * grad_out.shape[2]

        self.grads["gamma"] = self.grads["gamma"] + (grad_out * x_hat).sum(axis=(0, 2))
        self.grads["beta"] = self.grads["beta"] + grad_out.sum(axis=(0, 2))

        d_hat = grad_out * self._expand(self.params["gamma"])
        sum_d = d_hat.sum(axis=(0, 2), keepdims=True)
        sum_dx = (d_hat * x_hat).sum(axis=(0, 2), keepdims=True)
        return self._expand(inv_std) / count * (count * d_hat - sum_d - x_hat * sum_dx)


class ReLU(Layer):
    name = "relu"

    def __init__(self):
        super().__init__()
        self._mask: Optional[Tensor] = None

    def forward(self, x: Tensor) -> Tensor:
        mask = x > 0
        if self.training:
            self._mask = mask
        return np.where(mask, x, 0.0)

    def backward(self, grad_out: Tensor) -> Tensor:
        if self._mask is None:
            raise LayerStateException("ReLU.backward called before a training-mode forward")
        if grad_out.shape != self._mask.shape:
            raise ShapeException(f"ReLU grad shape {grad_out.shape} != {self._mask.shape}")
        return np.where(self._mask, grad_out, 0.0)


class Linear(Layer):
    name = "linear"

    def __init__(self, in_features: int, out_features: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.in_features = in_features
        self.out_features = out_features
        self._register("weight", kaiming_uniform(rng, (out_features, in_features), in_features))
        self._register("bias", kaiming_uniform(rng, (out_features,), in_features))
        self._input: Optional[Tensor] = None

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeException(f"Linear expects (n, {self.in_features}), got {x.shape}")
        if self.training:
            self._input = x
        return np.matmul(x[:, None, :], self.params["weight"].T)[:, 0, :] + self.params["bias"]

    def backward(self, grad_out: Tensor) -> Tensor:
        if self._input is None:
            raise LayerStateException("Linear.backward called before a training-mode forward")
        if grad_out.shape != (self._input.shape[0], self.out_features):
            raise ShapeException(f"Linear grad shape {grad_out.shape} mismatches output")
        self.grads["weight"] = self.grads["weight"] + grad_out.T @ self._input
        self.grads["bias"] = self.grads["bias"] + grad_out.sum(axis=0)
        return grad_out @ self.params["weight"]


class Reshape(Layer):
    """Reshape everything after the batch axis."""

    name = "reshape"

    def __init__(self, *shape: int):
        super().__init__()
        self.shape = shape
        self._input_shape: Optional[Tuple[int, ...]] = None

    def forward(self, x: Tensor) -> Tensor:
        target = (x.shape[0],) + self.shape
        if int(np.prod(x.shape[1:])) != int(np.prod(self.shape)):
            raise ShapeException(f"Cannot reshape {x.shape} to {target}")
        if self.training:
            self._input_shape = x.shape
        return x.reshape(target)

    def backward(self, grad_out: Tensor) -> Tensor:
        if self._input_shape is None:
            raise LayerStateException("Reshape.backward called before forward")
        return grad_out.reshape(self._input_shape)


class Sequential:
    """Ordered layer stack; parameters are addressed as '<index>.<layer>.<param>'."""

    def __init__(self, layers: Iterable[Layer]):
        self.layers: List[Layer] = list(layers)

    def layer_keys(self) -> List[str]:
        return [f"{i}.{layer.name}" for i, layer in enumerate(self.layers)]

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, grad_out: Tensor) -> Tensor:
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def train(self, mode: bool = True) -> "Sequential":
        for layer in self.layers:
            layer.train(mode)
        return self

    def eval(self) -> "Sequential":
        return self.train(False)

    @property
    def training(self) -> bool:
        return all(layer.training for layer in self.layers)

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def parameters(self) -> Dict[str, Tensor]:
        return {f"{key}.{name}": value
                for key, layer in zip(self.layer_keys(), self.layers)
                for name, value in layer.params.items()}

    def gradients(self) -> Dict[str, Tensor]:
        return {f"{key}.{name}": value
                for key, layer in zip(self.layer_keys(), self.layers)
                for name, value in layer.grads.items()}

    def state_dict(self) -> Dict[str, Dict[str, Tensor]]:
        """Copies of parameters and buffers, grouped per layer."""
        return {key: {**{n: v.copy() for n, v in layer.params.items()},
                      **{n: v.copy() for n, v in layer.buffers.items()}}
                for key, layer in zip(self.layer_keys(), self.layers)
                if layer.params or layer.buffers}

    def load_state_dict(self, state: Dict[str, Dict[str, Tensor]]):
        for key, layer in zip(self.layer_keys(), self.layers):
            if not (layer.params or layer.buffers):
                continue
            if key not in state:
                raise ShapeException(f"State is missing layer {key}")
            for store in (layer.params, layer.buffers):
                for name, current in store.items():
                    value = state[key].get(name)
                    if value is None or value.shape != current.shape:
                        raise ShapeException(f"State for {key}.{name} missing or misshaped")
                    store[name] = np.array(value, dtype=np.float64)


def count_parameters(model: "Sequential | Layer") -> int:
    """Trainable values only; running statistics are buffers, not parameters."""
    layers: Sequence[Layer] = model.layers if isinstance(model, Sequential) else [model]
    return int(sum(value.size for layer in layers for value in layer.params.values()))

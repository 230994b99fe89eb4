from typing import List, Optional, Tuple

import numpy as np

from ..nn.layers import BatchNorm1d, Conv1d, Layer, Linear, ReLU, Reshape, Sequential

INPUT_LENGTH = 4096
CONV_CHANNELS: Tuple[int, ...] = (10, 20, 40, 80, 160, 160)
KERNEL_SIZE = 4
HIDDEN_FEATURES = 40
OUTPUT_FEATURES = 3


class GeometryModel(Sequential):
    """Raw 4096-sample RIR in, (length, width, height) ascending out.

    reshape -> 6 x [conv(k=4, s=4) -> batchnorm -> relu] -> reshape(160) -> fc 160->40 -> fc 40->3
    """

    def __init__(self, rng: Optional[np.random.Generator] = None, input_length: int = INPUT_LENGTH):
        rng = rng or np.random.default_rng()
        layers: List[Layer] = [Reshape(1, input_length)]
        in_channels = 1
        for out_channels in CONV_CHANNELS:
            layers += [
                Conv1d(in_channels, out_channels, KERNEL_SIZE, KERNEL_SIZE, rng=rng),
                BatchNorm1d(out_channels),
                ReLU(),
            ]
            in_channels = out_channels
        final_length = input_length // KERNEL_SIZE ** len(CONV_CHANNELS)
        layers += [
            Reshape(in_channels * final_length),
            Linear(in_channels * final_length, HIDDEN_FEATURES, rng=rng),
            Linear(HIDDEN_FEATURES, OUTPUT_FEATURES, rng=rng),
        ]
        super().__init__(layers)
        self.input_length = input_length

    @classmethod
    def build(cls, seed: int) -> "GeometryModel":
        return cls(rng=np.random.default_rng(seed))

    def shape_ladder(self, x: np.ndarray) -> List[Tuple[int, ...]]:
        """Output shape after every layer for input x (eval mode, no state change)."""
        was_training = self.training
        self.eval()
        shapes = []
        try:
            for layer in self.layers:
                x = layer.forward(x)
                shapes.append(x.shape)
        finally:
            self.train(was_training)
        return shapes

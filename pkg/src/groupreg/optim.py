"""SGD with momentum, shared by the edge-detector and registration training."""

import numpy as np


class SGD:
    def __init__(self, params, momentum=0.9):
        self.params = list(params)
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr):
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.data -= lr * v

    def zero_grad(self):
        for p in self.params:
            p.grad = None

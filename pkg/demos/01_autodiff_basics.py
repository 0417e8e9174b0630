"""Reverse-mode autodiff with the built-in tensor engine.

Builds a few small graphs by hand, runs backward, and checks every
gradient against central finite differences.
"""

import numpy as np

from foalnet import Tensor, grad_check
from foalnet.tensor import cross_entropy, softmax

rng = np.random.default_rng(0)

# A scalar chain: y = sum((x @ w + b)^2). Every op records its parents on
# the tape, so y.backward() fills .grad on each leaf that asked for one.
x = Tensor(rng.normal(size=(4, 3)))
w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
b = Tensor(np.zeros(2), requires_grad=True)

y = ((x @ w + b) ** 2.0).sum()
y.backward()
print("y =", y.item())
print("dy/db =", b.grad)

# d/db sum((xw+b)^2) is just twice the column sums of (xw+b)
manual = 2.0 * (x.data @ w.data + b.data).sum(axis=0)
print("matches the hand derivative:", bool(np.allclose(b.grad, manual)))

# grad_check perturbs one coordinate at a time by +/- h and reports the
# worst relative error over every coordinate of every parameter
err = grad_check(lambda: ((x @ w + b) ** 2.0).sum(), [w, b])
print(f"finite-difference sweep: max rel err {err:.2e}")

# Classification losses work the same way. The gradient of mean
# cross-entropy wrt the logits is (softmax(row) - onehot(target)) / N.
logits = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
targets = np.array([0, 2, 1, 1, 0])

loss = cross_entropy(logits, targets)
loss.backward()
print("\ncross-entropy =", loss.item())

probs = softmax(Tensor(logits.data)).data
onehot = np.eye(3)[targets]
print("logit gradient matches softmax - onehot:",
      bool(np.allclose(logits.grad, (probs - onehot) / 5)))

err = grad_check(lambda: cross_entropy(logits, targets), [logits])
print(f"finite-difference sweep: max rel err {err:.2e}")

#!/usr/bin/env python3
"""Tensors, the tape, and reverse-mode gradients.

Walks the autodiff core from the bottom: wrap arrays, record operations on
a tape, pull gradients back, and spot-check one of them against a finite
difference.
"""

import numpy as np

from tempnet.autodiff import (
    Tape,
    Tensor,
    bce_loss,
    conv3d,
    dense,
    mul,
    reduce_mean,
    relu,
    sigmoid,
)

# --- 1. tensors wrap plain numpy arrays ------------------------------------

x = Tensor(np.array([1.0, 2.0, 3.0]), trainable=True)
print("data:", x.data, "dtype:", x.data.dtype, "trainable:", x.trainable)

# Operations only record themselves while a Tape is active. Outside a tape
# they still compute, which keeps inference cheap.
y = mul(x, x)
print("x*x outside tape:", y.data)

# --- 2. recording and replaying -------------------------------------------

with Tape() as tape:
    y = mul(x, x)            # x^2
    z = reduce_mean(y, (0,)) # mean over the vector
grads = tape.backward(z)
print("d(mean(x^2))/dx =", grads[x], "(expected 2x/3 =", 2 * x.data / 3, ")")

# --- 3. a small expression with several ops --------------------------------

w = Tensor(np.array([[0.5], [-0.25], [0.1]]), trainable=True)
b = Tensor(np.array([0.2]), trainable=True)
with Tape() as tape:
    h = relu(dense(x, w, b))
    p = sigmoid(h)
    loss = bce_loss(p, np.array([1.0]))
grads = tape.backward(loss)
print("loss:", float(loss.data))
print("dL/dw:", grads[w].ravel())
print("dL/db:", grads[b])

# --- 4. finite-difference spot check ---------------------------------------
# Central differences on one weight entry. The tape gradient should agree
# to several digits; float64 params keep the difference quotient clean.

eps = 1e-6
probe = (1, 0)


def loss_at(wval):
    wt = Tensor(wval)
    with Tape():
        return float(bce_loss(sigmoid(relu(dense(x, wt, b))), np.array([1.0])).data)


w_plus = w.data.copy()
w_plus[probe] += eps
w_minus = w.data.copy()
w_minus[probe] -= eps
fd = (loss_at(w_plus) - loss_at(w_minus)) / (2 * eps)
print(f"tape grad {grads[w][probe]:+.8f}  finite diff {fd:+.8f}")

# --- 5. the same machinery runs a 3d convolution ----------------------------

rng = np.random.default_rng(0)
clip = rng.standard_normal((4, 6, 8, 1))
kernel = Tensor(rng.standard_normal((3, 3, 3, 1, 2)) * 0.1, trainable=True)
bias = Tensor(np.zeros(2), trainable=True)
with Tape() as tape:
    feat = relu(conv3d(clip, kernel, bias))
    score = reduce_mean(feat, (0, 1, 2, 3))
grads = tape.backward(score)
print("conv output shape:", feat.data.shape)
print("kernel grad shape:", grads[kernel].shape, "bias grad:", grads[bias])
print("nodes on tape:", len(tape.nodes))

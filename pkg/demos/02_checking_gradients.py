"""
Trusting hand-written backpropagation
=====================================

Every layer in the kernel has a hand-derived backward pass.  Central finite
differences give an independent estimate of each gradient, so we can check
one against the other before training anything.
"""

import numpy as np

from votestack import nnkernel as nk

rng = np.random.default_rng(0)

# A scalar loss from a random projection of the layer output makes every
# output coordinate matter.
seq = rng.normal(size=(2, 5, 3))        # two sequences, five steps, three features
lengths = np.array([5, 3])              # the second one is padded after step 3
R = rng.normal(size=(2, 4))


def lstm_loss(params, _):
    h, cache = nk.lstm_forward(params["seq"], nk.params_from_dict(nk.LstmParams, params), lengths)
    dseq, grads = nk.lstm_backward(R, cache)
    return float((h * R).sum()), {**nk.params_to_dict(grads), "seq": dseq}


params = {**nk.params_to_dict(nk.LstmParams.init(3, 4, rng)), "seq": seq}
print(f"LSTM   max relative error: {nk.gradient_check(lstm_loss, params):.2e}")

# The same for a bank of width-2 convolution filters with max-over-time pooling.
filters, bias = rng.normal(size=(6, 2, 3)), np.zeros(6)
R6 = rng.normal(size=(2, 6))


def conv_loss(params, _):
    out, cache = nk.conv1d_maxpool_forward(params["seq"], params["filters"], params["bias"], lengths)
    dseq, dfilters, dbias = nk.conv1d_maxpool_backward(R6, cache)
    return float((out * R6).sum()), {"seq": dseq, "filters": dfilters, "bias": dbias}


print(f"Conv1d max relative error: {nk.gradient_check(conv_loss, dict(seq=seq, filters=filters, bias=bias)):.2e}")

# Padding positions are never read: filling them with NaN changes nothing.
poisoned = seq.copy()
poisoned[1, 3:] = np.nan
h_clean, _ = nk.lstm_forward(seq, nk.params_from_dict(nk.LstmParams, params), lengths)
h_nan, _ = nk.lstm_forward(poisoned, nk.params_from_dict(nk.LstmParams, params), lengths)
print("NaN padding leaves the output unchanged:", np.array_equal(h_clean, h_nan))

#pragma once

#include <cstddef>
#include <vector>

#include "capsid/rng.hpp"
#include "capsid/tensor.hpp"

// Differentiable operations. All are batched over the leading axis and
// register exact adjoints on the Graph. Output requires_grad is the OR of
// the inputs'; pure-forward results skip the tape entirely.

namespace capsid::ops {

// x [B,Ci,H,W], w [Co,Ci,kh,kw], bias [Co] -> [B,Co,Ho,Wo] with
// Ho = (H-kh)/sh + 1, Wo = (W-kw)/sw + 1. Valid cross-correlation, no
// padding, plus a per-output-channel bias.
TensorPtr conv2d(Graph& g, TensorPtr x, TensorPtr w, TensorPtr bias,
                 std::size_t sh, std::size_t sw);

// x [B,C,H,W] -> [B,C,H/ph,W/pw] (floor); ties go to the first element in
// row-major scan order.
TensorPtr maxpool2d(Graph& g, TensorPtr x, std::size_t ph, std::size_t pw);

// Normalizes over all axes except the channel axis (axis 1). In training
// mode uses batch statistics and folds them into the running buffers as
// running = momentum*running + (1-momentum)*batch; in eval mode uses the
// running buffers. running_mean/var are plain state, not graph inputs.
TensorPtr batchnorm(Graph& g, TensorPtr x, TensorPtr gamma, TensorPtr beta,
                    TensorPtr running_mean, TensorPtr running_var,
                    double momentum, double eps, bool training);

// Inverted dropout: each kept element is scaled by 1/(1-rate). Draws exactly
// size(x) doubles from rng in training mode; identity in eval mode.
TensorPtr dropout(Graph& g, TensorPtr x, double rate, Rng& rng, bool training);

// x [B,in], w [out,in], bias [out] -> [B,out]
TensorPtr dense(Graph& g, TensorPtr x, TensorPtr w, TensorPtr bias);

TensorPtr relu(Graph& g, TensorPtr x);
TensorPtr sigmoid(Graph& g, TensorPtr x);

// Max-subtracted softmax along the given axis; slices sum to 1.
TensorPtr softmax(Graph& g, TensorPtr x, std::size_t axis);

TensorPtr reshape(Graph& g, TensorPtr x, std::vector<std::size_t> shape);

TensorPtr add(Graph& g, TensorPtr x, TensorPtr y);
TensorPtr sub(Graph& g, TensorPtr x, TensorPtr y);
TensorPtr mul(Graph& g, TensorPtr x, TensorPtr y);
TensorPtr scale(Graph& g, TensorPtr x, double a);

TensorPtr sum(Graph& g, TensorPtr x);
TensorPtr mean(Graph& g, TensorPtr x);

// Mean over every element of (x-y)^2.
TensorPtr mse(Graph& g, TensorPtr x, TensorPtr y);

// Mean over channels of the trailing spatial axes: [B,C,...] -> [B,C].
TensorPtr global_avg_pool(Graph& g, TensorPtr x);

// L[...] = sqrt(sum over last axis of v^2 + 1e-18); drops the last axis.
TensorPtr length_last(Graph& g, TensorPtr x);

// v = s * (|s| / (1 + |s|^2)) per vector along the last axis. Algebraically
// the same as (|s|^2/(1+|s|^2))*(s/|s|) but with no 0/0 at the origin; the
// epsilon guard appears only in the adjoint's curvature term.
TensorPtr squash_last(Graph& g, TensorPtr x);

// Groups consecutive channel blocks of d feature maps into capsule
// vectors: x [B,C,H,W] -> [B,(C/d)*H*W,d], capsule (m,y,x) taking its k-th
// component from channel m*d+k at (y,x).
TensorPtr capsule_reshape(Graph& g, TensorPtr x, std::size_t d);

// u_hat[b,i,j,:] = W[i,j,:,:] * u[b,i,:].
// W [Ni,No,Du,Dl], u [B,Ni,Dl] -> [B,Ni,No,Du]
TensorPtr caps_predict(Graph& g, TensorPtr w, TensorPtr u);

// s[b,j,:] = sum_i c[b,i,j] * u_hat[b,i,j,:].
// c [B,Ni,No], u_hat [B,Ni,No,Du] -> [B,No,Du]
TensorPtr caps_weighted_sum(Graph& g, TensorPtr c, TensorPtr u_hat);

// a[b,i,j] = u_hat[b,i,j,:] . v[b,j,:].
// u_hat [B,Ni,No,Du], v [B,No,Du] -> [B,Ni,No]
TensorPtr caps_agreement(Graph& g, TensorPtr u_hat, TensorPtr v);

// Per sample: sum_c T_c*max(0, m_plus-L_c)^2 + lam*(1-T_c)*max(0, L_c-m_minus)^2
// with T_c = 1 iff c = label; the batch mean is returned.
TensorPtr margin_loss(Graph& g, TensorPtr lengths,
                      const std::vector<std::size_t>& labels, double m_plus,
                      double m_minus, double lam);

// Mean cross-entropy of softmax(logits) against integer labels.
TensorPtr softmax_xent(Graph& g, TensorPtr logits,
                       const std::vector<std::size_t>& labels);

// v [B,C,D] -> [B,C*D] with every row except labels[b] zeroed.
TensorPtr mask_select(Graph& g, TensorPtr v,
                      const std::vector<std::size_t>& labels);

}  // namespace capsid::ops

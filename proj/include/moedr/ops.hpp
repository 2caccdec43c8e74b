#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "moedr/tensor.hpp"

namespace moedr {

// Elementwise arithmetic (same shape).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

// Broadcast a scalar tensor against a; keeps the scalar on the tape.
Tensor mul_bcast(const Tensor& a, const Tensor& s);
Tensor sub_bcast(const Tensor& a, const Tensor& s);

Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar
Tensor sqrt_t(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor slice(const Tensor& a, std::int64_t offset, std::int64_t len);  // rank-1
Tensor concat(const std::vector<Tensor>& parts);                       // rank-1
Tensor gather(const Tensor& a, std::int64_t index);                    // -> scalar

// General pairwise tensor contraction. `axes` pairs (axis of a, axis of b);
// paired axes must match in size. The result shape is the uncontracted axes
// of a followed by the uncontracted axes of b (rank-0 result for full
// contraction). An empty axes list is the outer product; matrix multiply
// and mode-n tensor-vector products are special cases.
Tensor contract(const Tensor& a, const Tensor& b,
                const std::vector<std::pair<int, int>>& axes);

// Activations.
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor signed_sqrt(const Tensor& a);
Tensor l2_normalize(const Tensor& a);  // rank-1; identity when the norm < 1e-12

// Softmax along `axis`; -inf entries map to exact zeros.
Tensor softmax(const Tensor& a, int axis);

// Exact 1.5-entmax along `axis` (sort-based threshold). Output lies on the
// probability simplex; the gradient is supported only where the output is
// strictly positive.
Tensor entmax15(const Tensor& a, int axis);

// Standard normal CDF, elementwise.
Tensor normal_cdf(const Tensor& a);

// Keeps entries flagged in `keep`, sets the rest to -inf (top-k masking).
Tensor mask_to_neginf(const Tensor& a, const std::vector<bool>& keep);

// Affine map for rank-1 input: y = W x + b, W is (out x in).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// 2-D cross-correlation on a CHW image with an (OC x IC x KH x KW) kernel.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              int stride, int padding);

Tensor maxpool2d(const Tensor& x, int window, int stride);

// Mean cross-entropy over a batch of logit vectors; labels index the true
// class of each sample.
Tensor cross_entropy_mean(const std::vector<Tensor>& logits,
                          const std::vector<int>& labels);

// Squared coefficient of variation over a rank-1 tensor, computed as
// var / (mean + 1e-10)^2 with the population variance.
Tensor cv_squared(const Tensor& a);

}  // namespace moedr

#include "moedr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace moedr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Eight independent accumulator chains, combined in a fixed order. The
// order never depends on allocation or thread scheduling, so results are
// bit-stable for a given build.
double dot8(const double* a, const double* b, std::int64_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
    s4 += a[i + 4] * b[i + 4];
    s5 += a[i + 5] * b[i + 5];
    s6 += a[i + 6] * b[i + 6];
    s7 += a[i + 7] * b[i + 7];
  }
  double tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return (((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))) + tail;
}

void axpy(double alpha, const double* x, double* y, std::int64_t n) {
#pragma omp simd
  for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Output-index range [lo, hi) for kernel offset kk such that every load
// kk + out*stride - padding stays inside [0, size).
std::pair<std::int64_t, std::int64_t> conv_range(std::int64_t kk, std::int64_t size,
                                                 std::int64_t osize, int stride, int padding) {
  std::int64_t lo = 0;
  if (kk < padding) lo = (padding - kk + stride - 1) / stride;
  std::int64_t hi = std::min<std::int64_t>(osize, (size - 1 + padding - kk) / stride + 1);
  return {lo, hi};
}

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<NodePtr> parents,
               std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  node->requires_grad = rg;
  if (rg) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Row-major strides.
std::vector<std::int64_t> strides_of(const Shape& shape) {
  std::vector<std::int64_t> st(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i) + 1] * shape[static_cast<std::size_t>(i) + 1];
  }
  return st;
}

bool is_identity_perm(const std::vector<int>& perm) {
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] != static_cast<int>(i)) return false;
  }
  return true;
}

// Walks the permuted layout with an odometer and applies `fn(dst_lin,
// src_off)` for every element. dst shape = src shape permuted by `perm`.
template <typename Fn>
void walk_permutation(const Shape& src_shape, const std::vector<int>& perm, Fn&& fn) {
  const int rank = static_cast<int>(src_shape.size());
  const auto src_strides = strides_of(src_shape);
  Shape dst_shape(static_cast<std::size_t>(rank));
  std::vector<std::int64_t> stride(static_cast<std::size_t>(rank));
  for (int j = 0; j < rank; ++j) {
    dst_shape[static_cast<std::size_t>(j)] = src_shape[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
    stride[static_cast<std::size_t>(j)] = src_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
  }
  const std::int64_t total = numel(src_shape);
  std::vector<std::int64_t> idx(static_cast<std::size_t>(rank), 0);
  std::int64_t src_off = 0;
  for (std::int64_t lin = 0; lin < total; ++lin) {
    fn(lin, src_off);
    for (int j = rank - 1; j >= 0; --j) {
      auto ju = static_cast<std::size_t>(j);
      if (++idx[ju] < dst_shape[ju]) {
        src_off += stride[ju];
        break;
      }
      src_off -= stride[ju] * (dst_shape[ju] - 1);
      idx[ju] = 0;
    }
  }
}

std::vector<double> permute_copy(const std::vector<double>& src, const Shape& src_shape,
                                 const std::vector<int>& perm) {
  std::vector<double> dst(src.size());
  walk_permutation(src_shape, perm, [&](std::int64_t lin, std::int64_t off) { dst[static_cast<std::size_t>(lin)] = src[static_cast<std::size_t>(off)]; });
  return dst;
}

void permute_accumulate(const std::vector<double>& permuted, const Shape& src_shape,
                        const std::vector<int>& perm, std::vector<double>& src_grad) {
  walk_permutation(src_shape, perm, [&](std::int64_t lin, std::int64_t off) { src_grad[static_cast<std::size_t>(off)] += permuted[static_cast<std::size_t>(lin)]; });
}

// C[M x N] += A[M x K] * B[K x N]; per-output accumulation runs over k in
// a fixed order.
void gemm_accum(const double* a, const double* b, double* c,
                std::int64_t m, std::int64_t k, std::int64_t n) {
  if (n == 1) {
    for (std::int64_t i = 0; i < m; ++i) c[i] += dot8(a + i * k, b, k);
    return;
  }
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::int64_t j = 0; j < k; ++j) axpy(arow[j], b + j * n, crow, n);
  }
}

// Iterates lanes along `axis`: calls fn(base, count, stride) per lane.
template <typename Fn>
void for_each_lane(const Shape& shape, int axis, Fn&& fn) {
  const int rank = static_cast<int>(shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw std::invalid_argument("axis out of range");
  std::int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= shape[static_cast<std::size_t>(i)];
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
  const std::int64_t len = shape[static_cast<std::size_t>(axis)];
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      fn(o * len * inner + in, len, inner);
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  NodePtr an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  NodePtr an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  NodePtr an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
  NodePtr an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] / bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        bn->grad[i] -= self.grad[i] * an->value[i] / (bn->value[i] * bn->value[i]);
      }
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= c;
  NodePtr an = a.node();
  return make_op(a.shape(), std::move(out), {an}, [an, c](Node& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += c * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v += c;
  NodePtr an = a.node();
  return make_op(a.shape(), std::move(out), {an}, [an](Node& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

Tensor mul_bcast(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw std::invalid_argument("mul_bcast: scalar operand must have one element");
  const double sv = s.values()[0];
  std::vector<double> out(a.values());
  for (double& v : out) v *= sv;
  NodePtr an = a.node(), sn = s.node();
  return make_op(a.shape(), std::move(out), {an, sn}, [an, sn, sv](Node& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += sv * self.grad[i];
    }
    if (sn->requires_grad) {
      sn->ensure_grad();
      double acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * an->value[i];
      sn->grad[0] += acc;
    }
  });
}

Tensor sub_bcast(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw std::invalid_argument("sub_bcast: scalar operand must have one element");
  const double sv = s.values()[0];
  std::vector<double> out(a.values());
  for (double& v : out) v -= sv;
  NodePtr an = a.node(), sn = s.node();
  return make_op(a.shape(), std::move(out), {an, sn}, [an, sn](Node& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (sn->requires_grad) {
      sn->ensure_grad();
      double acc = 0;
      for (double g : self.grad) acc += g;
      sn->grad[0] -= acc;
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0;
  for (double v : a.values()) s += v;
  NodePtr an = a.node();
  return make_op({}, {s}, {an}, [an](Node& self) {
    an->ensure_grad();
    const double g = self.grad[0];
    for (double& gv : an->grad) gv += g;
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor sqrt_t(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = std::sqrt(v);
  NodePtr an = a.node();
  return make_op(a.shape(), std::move(out), {an}, [an](Node& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      an->grad[i] += self.grad[i] * 0.5 / std::max(self.value[i], 1e-150);
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  NodePtr an = a.node();
  return make_op(std::move(shape), a.values(), {an}, [an](Node& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

Tensor slice(const Tensor& a, std::int64_t offset, std::int64_t len) {
  if (a.rank() != 1) throw std::invalid_argument("slice expects a rank-1 tensor");
  if (offset < 0 || len <= 0 || offset + len > a.size()) {
    throw std::invalid_argument("slice range out of bounds");
  }
  std::vector<double> out(a.values().begin() + offset, a.values().begin() + offset + len);
  NodePtr an = a.node();
  return make_op({len}, std::move(out), {an}, [an, offset](Node& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      an->grad[static_cast<std::size_t>(offset) + i] += self.grad[i];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  std::vector<double> out;
  std::vector<NodePtr> parents;
  std::vector<std::int64_t> sizes;
  for (const auto& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    parents.push_back(p.node());
    sizes.push_back(p.size());
  }
  const auto total = static_cast<std::int64_t>(out.size());
  auto parents_copy = parents;
  return make_op({total}, std::move(out), std::move(parents),
                 [parents_copy, sizes](Node& self) {
                   std::int64_t off = 0;
                   for (std::size_t p = 0; p < parents_copy.size(); ++p) {
                     auto& par = parents_copy[p];
                     if (par->requires_grad) {
                       par->ensure_grad();
                       for (std::int64_t i = 0; i < sizes[p]; ++i) {
                         par->grad[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(off + i)];
                       }
                     }
                     off += sizes[p];
                   }
                 });
}

Tensor gather(const Tensor& a, std::int64_t index) {
  if (index < 0 || index >= a.size()) throw std::invalid_argument("gather index out of range");
  NodePtr an = a.node();
  return make_op({}, {a.values()[static_cast<std::size_t>(index)]}, {an}, [an, index](Node& self) {
    an->ensure_grad();
    an->grad[static_cast<std::size_t>(index)] += self.grad[0];
  });
}

Tensor contract(const Tensor& a, const Tensor& b,
                const std::vector<std::pair<int, int>>& axes) {
  const int ra = a.rank(), rb = b.rank();
  std::vector<bool> used_a(static_cast<std::size_t>(ra), false), used_b(static_cast<std::size_t>(rb), false);
  for (auto [ia, ib] : axes) {
    if (ia < 0 || ia >= ra || ib < 0 || ib >= rb) {
      throw std::invalid_argument("contract: axis out of range");
    }
    if (used_a[static_cast<std::size_t>(ia)] || used_b[static_cast<std::size_t>(ib)]) {
      throw std::invalid_argument("contract: repeated contraction axis");
    }
    used_a[static_cast<std::size_t>(ia)] = used_b[static_cast<std::size_t>(ib)] = true;
    if (a.dim(ia) != b.dim(ib)) {
      throw std::invalid_argument("contract: paired axes differ, " + shape_str(a.shape()) +
                                  " axis " + std::to_string(ia) + " vs " + shape_str(b.shape()) +
                                  " axis " + std::to_string(ib));
    }
  }

  std::vector<int> perm_a, perm_b;
  Shape out_shape;
  for (int i = 0; i < ra; ++i) {
    if (!used_a[static_cast<std::size_t>(i)]) {
      perm_a.push_back(i);
      out_shape.push_back(a.dim(i));
    }
  }
  std::int64_t k = 1;
  for (auto [ia, ib] : axes) {
    perm_a.push_back(ia);
    perm_b.push_back(ib);
    k *= a.dim(ia);
  }
  for (int i = 0; i < rb; ++i) {
    if (!used_b[static_cast<std::size_t>(i)]) {
      perm_b.push_back(i);
      out_shape.push_back(b.dim(i));
    }
  }
  const std::int64_t m = a.size() / k;
  const std::int64_t n = b.size() / k;

  const bool ida = is_identity_perm(perm_a), idb = is_identity_perm(perm_b);
  std::vector<double> a_perm_store, b_perm_store;
  const double* ap = a.values().data();
  const double* bp = b.values().data();
  if (!ida) {
    a_perm_store = permute_copy(a.values(), a.shape(), perm_a);
    ap = a_perm_store.data();
  }
  if (!idb) {
    b_perm_store = permute_copy(b.values(), b.shape(), perm_b);
    bp = b_perm_store.data();
  }

  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  gemm_accum(ap, bp, out.data(), m, k, n);

  NodePtr an = a.node(), bn = b.node();
  // The backward pass re-permutes on demand; keeping the permuted copies
  // alive would roughly double graph memory.
  return make_op(std::move(out_shape), std::move(out), {an, bn},
                 [an, bn, perm_a, perm_b, ida, idb, m, n, k](Node& self) {
                   std::vector<double> a_pm, b_pm;
                   const double* apv = an->value.data();
                   const double* bpv = bn->value.data();
                   if (!ida) {
                     a_pm = permute_copy(an->value, an->shape, perm_a);
                     apv = a_pm.data();
                   }
                   if (!idb) {
                     b_pm = permute_copy(bn->value, bn->shape, perm_b);
                     bpv = b_pm.data();
                   }
                   const double* g = self.grad.data();
                   if (an->requires_grad) {
                     an->ensure_grad();
                     std::vector<double> da(static_cast<std::size_t>(m * k), 0.0);
                     // da[m][k] = sum_n g[m][n] * b[k][n]
                     for (std::int64_t i = 0; i < m; ++i) {
                       for (std::int64_t j = 0; j < k; ++j) {
                         da[static_cast<std::size_t>(i * k + j)] = dot8(g + i * n, bpv + j * n, n);
                       }
                     }
                     if (ida) {
                       for (std::size_t i = 0; i < da.size(); ++i) an->grad[i] += da[i];
                     } else {
                       permute_accumulate(da, an->shape, perm_a, an->grad);
                     }
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     std::vector<double> db(static_cast<std::size_t>(k * n), 0.0);
                     // db[k][n] = sum_m a[m][k] * g[m][n]
                     for (std::int64_t i = 0; i < m; ++i) {
                       const double* arow = apv + i * k;
                       const double* grow = g + i * n;
                       for (std::int64_t j = 0; j < k; ++j) axpy(arow[j], grow, db.data() + j * n, n);
                     }
                     if (idb) {
                       for (std::size_t i = 0; i < db.size(); ++i) bn->grad[i] += db[i];
                     } else {
                       permute_accumulate(db, bn->shape, perm_b, bn->grad);
                     }
                   }
                 });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = v > 0 ? v : 0.0;
  NodePtr an = a.node();
  return make_op(a.shape(), std::move(out), {an}, [an](Node& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (an->value[i] > 0) an->grad[i] += self.grad[i];
    }
  });
}

Tensor softplus(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  NodePtr an = a.node();
  return make_op(a.shape(), std::move(out), {an}, [an](Node& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = an->value[i];
      const double sig = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      an->grad[i] += self.grad[i] * sig;
    }
  });
}

Tensor signed_sqrt(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = v >= 0 ? std::sqrt(v) : -std::sqrt(-v);
  NodePtr an = a.node();
  return make_op(a.shape(), std::move(out), {an}, [an](Node& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = std::abs(an->value[i]);
      if (x > 0) an->grad[i] += self.grad[i] * 0.5 / std::sqrt(x);
    }
  });
}

Tensor l2_normalize(const Tensor& a) {
  if (a.rank() != 1) throw std::invalid_argument("l2_normalize expects a rank-1 tensor");
  double n2 = 0;
  for (double v : a.values()) n2 += v * v;
  const double norm = std::sqrt(n2);
  NodePtr an = a.node();
  if (norm < 1e-12) {
    // Identity below the guard threshold.
    return make_op(a.shape(), a.values(), {an}, [an](Node& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
  }
  std::vector<double> out(a.values());
  for (double& v : out) v /= norm;
  return make_op(a.shape(), std::move(out), {an}, [an, norm](Node& self) {
    an->ensure_grad();
    double gv = 0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gv += self.grad[i] * an->value[i];
    const double n3 = norm * norm * norm;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      an->grad[i] += self.grad[i] / norm - an->value[i] * gv / n3;
    }
  });
}

Tensor softmax(const Tensor& a, int axis) {
  std::vector<double> out(a.values());
  for_each_lane(a.shape(), axis, [&](std::int64_t base, std::int64_t len, std::int64_t stride) {
    double mx = kNegInf;
    for (std::int64_t j = 0; j < len; ++j) mx = std::max(mx, out[static_cast<std::size_t>(base + j * stride)]);
    if (!std::isfinite(mx)) {
      throw std::invalid_argument("softmax: lane has no finite entry");
    }
    double z = 0;
    for (std::int64_t j = 0; j < len; ++j) {
      auto& v = out[static_cast<std::size_t>(base + j * stride)];
      v = std::exp(v - mx);  // exp(-inf) == 0
      z += v;
    }
    for (std::int64_t j = 0; j < len; ++j) out[static_cast<std::size_t>(base + j * stride)] /= z;
  });
  NodePtr an = a.node();
  Shape shape = a.shape();
  return make_op(a.shape(), std::move(out), {an}, [an, axis, shape](Node& self) {
    an->ensure_grad();
    for_each_lane(shape, axis, [&](std::int64_t base, std::int64_t len, std::int64_t stride) {
      double dot = 0;
      for (std::int64_t j = 0; j < len; ++j) {
        auto idx = static_cast<std::size_t>(base + j * stride);
        dot += self.grad[idx] * self.value[idx];
      }
      for (std::int64_t j = 0; j < len; ++j) {
        auto idx = static_cast<std::size_t>(base + j * stride);
        an->grad[idx] += self.value[idx] * (self.grad[idx] - dot);
      }
    });
  });
}

Tensor entmax15(const Tensor& a, int axis) {
  for (double v : a.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("entmax15: input must be finite");
  }
  std::vector<double> out(a.values());
  for_each_lane(a.shape(), axis, [&](std::int64_t base, std::int64_t len, std::int64_t stride) {
    std::vector<double> s(static_cast<std::size_t>(len));
    for (std::int64_t j = 0; j < len; ++j) s[static_cast<std::size_t>(j)] = out[static_cast<std::size_t>(base + j * stride)] / 2.0;
    std::vector<double> sorted(s);
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    // Exact threshold: tau_k from the cumulative moments of the top-k
    // entries; the support is the largest k with sorted[k-1] > tau_k.
    double cum = 0, cum_sq = 0, tau = 0;
    for (std::int64_t kk = 1; kk <= len; ++kk) {
      const double v = sorted[static_cast<std::size_t>(kk - 1)];
      cum += v;
      cum_sq += v * v;
      const double mean_k = cum / static_cast<double>(kk);
      const double under = mean_k * mean_k - (cum_sq - 1.0) / static_cast<double>(kk);
      const double t = mean_k - std::sqrt(std::max(under, 0.0));
      if (v > t) tau = t;
    }
    for (std::int64_t j = 0; j < len; ++j) {
      const double d = s[static_cast<std::size_t>(j)] - tau;
      out[static_cast<std::size_t>(base + j * stride)] = d > 0 ? d * d : 0.0;
    }
  });
  NodePtr an = a.node();
  Shape shape = a.shape();
  return make_op(a.shape(), std::move(out), {an}, [an, axis, shape](Node& self) {
    an->ensure_grad();
    // On the support, d p_i / d z_j = u_i delta_ij - u_i u_j / sum(u) with
    // u = sqrt(p); zero elsewhere.
    for_each_lane(shape, axis, [&](std::int64_t base, std::int64_t len, std::int64_t stride) {
      double su = 0, gu = 0;
      for (std::int64_t j = 0; j < len; ++j) {
        auto idx = static_cast<std::size_t>(base + j * stride);
        const double u = std::sqrt(self.value[idx]);
        su += u;
        gu += self.grad[idx] * u;
      }
      const double ratio = su > 0 ? gu / su : 0.0;
      for (std::int64_t j = 0; j < len; ++j) {
        auto idx = static_cast<std::size_t>(base + j * stride);
        const double u = std::sqrt(self.value[idx]);
        if (u > 0) an->grad[idx] += u * (self.grad[idx] - ratio);
      }
    });
  });
}

Tensor normal_cdf(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = 0.5 * std::erfc(-v / std::sqrt(2.0));
  NodePtr an = a.node();
  return make_op(a.shape(), std::move(out), {an}, [an](Node& self) {
    an->ensure_grad();
    constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599344;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = an->value[i];
      an->grad[i] += self.grad[i] * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    }
  });
}

Tensor mask_to_neginf(const Tensor& a, const std::vector<bool>& keep) {
  if (static_cast<std::int64_t>(keep.size()) != a.size()) {
    throw std::invalid_argument("mask_to_neginf: mask size mismatch");
  }
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!keep[i]) out[i] = kNegInf;
  }
  NodePtr an = a.node();
  return make_op(a.shape(), std::move(out), {an}, [an, keep](Node& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (keep[i]) an->grad[i] += self.grad[i];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 1 || w.rank() != 2 || b.rank() != 1) {
    throw std::invalid_argument("linear: expected x rank-1, w rank-2, b rank-1");
  }
  const std::int64_t in = x.size(), out_dim = w.dim(0);
  if (w.dim(1) != in || b.size() != out_dim) {
    throw std::invalid_argument("linear: shape mismatch, x " + shape_str(x.shape()) +
                                ", w " + shape_str(w.shape()) + ", b " + shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(out_dim));
  const double* wp = w.values().data();
  const double* xp = x.values().data();
  for (std::int64_t o = 0; o < out_dim; ++o) out[static_cast<std::size_t>(o)] = b.values()[static_cast<std::size_t>(o)] + dot8(wp + o * in, xp, in);
  NodePtr xn = x.node(), wn = w.node(), bn = b.node();
  return make_op({out_dim}, std::move(out), {xn, wn, bn}, [xn, wn, bn, in, out_dim](Node& self) {
    const double* g = self.grad.data();
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::int64_t o = 0; o < out_dim; ++o) bn->grad[static_cast<std::size_t>(o)] += g[o];
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      for (std::int64_t o = 0; o < out_dim; ++o) {
        axpy(g[o], xn->value.data(), wn->grad.data() + o * in, in);
      }
    }
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (std::int64_t o = 0; o < out_dim; ++o) {
        axpy(g[o], wn->value.data() + o * in, xn->grad.data(), in);
      }
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              int stride, int padding) {
  if (x.rank() != 3 || w.rank() != 4) {
    throw std::invalid_argument("conv2d: expected x CxHxW and w OCxICxKHxKW");
  }
  const std::int64_t ic = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::int64_t oc = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != ic) throw std::invalid_argument("conv2d: channel mismatch");
  if (b.size() != oc) throw std::invalid_argument("conv2d: bias size mismatch");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  const std::int64_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::int64_t ow = (wd + 2 * padding - kw) / stride + 1;
  if (oh <= 0 || ow <= 0 || h + 2 * padding < kh || wd + 2 * padding < kw) {
    throw std::invalid_argument("conv2d: non-positive output spatial size");
  }

  std::vector<double> out(static_cast<std::size_t>(oc * oh * ow));
  for (std::int64_t c = 0; c < oc; ++c) {
    std::fill(out.begin() + c * oh * ow, out.begin() + (c + 1) * oh * ow, b.values()[static_cast<std::size_t>(c)]);
  }

  const double* xp = x.values().data();
  const double* wp = w.values().data();
  for (std::int64_t c = 0; c < oc; ++c) {
    for (std::int64_t i = 0; i < ic; ++i) {
      for (std::int64_t r = 0; r < kh; ++r) {
        auto [oh_lo, oh_hi] = conv_range(r, h, oh, stride, padding);
        for (std::int64_t s = 0; s < kw; ++s) {
          const double wv = wp[((c * ic + i) * kh + r) * kw + s];
          auto [ow_lo, ow_hi] = conv_range(s, wd, ow, stride, padding);
          if (ow_hi <= ow_lo) continue;
          for (std::int64_t y = oh_lo; y < oh_hi; ++y) {
            const double* in_row = xp + (i * h + y * stride + r - padding) * wd + (s - padding);
            double* out_row = out.data() + (c * oh + y) * ow;
            if (stride == 1) {
#pragma omp simd
              for (std::int64_t z = ow_lo; z < ow_hi; ++z) out_row[z] += wv * in_row[z];
            } else {
              for (std::int64_t z = ow_lo; z < ow_hi; ++z) out_row[z] += wv * in_row[z * stride];
            }
          }
        }
      }
    }
  }

  NodePtr xn = x.node(), wn = w.node(), bn = b.node();
  return make_op({oc, oh, ow}, std::move(out), {xn, wn, bn},
                 [xn, wn, bn, ic, h, wd, oc, kh, kw, oh, ow, stride, padding](Node& self) {
                   const double* g = self.grad.data();
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     for (std::int64_t c = 0; c < oc; ++c) {
                       double acc = 0;
                       const double* grow = g + c * oh * ow;
                       for (std::int64_t t = 0; t < oh * ow; ++t) acc += grow[t];
                       bn->grad[static_cast<std::size_t>(c)] += acc;
                     }
                   }
                   if (wn->requires_grad) {
                     wn->ensure_grad();
                     const double* xp = xn->value.data();
                     for (std::int64_t c = 0; c < oc; ++c) {
                       for (std::int64_t i = 0; i < ic; ++i) {
                         for (std::int64_t r = 0; r < kh; ++r) {
                           auto [oh_lo, oh_hi] = conv_range(r, h, oh, stride, padding);
                           for (std::int64_t s = 0; s < kw; ++s) {
                             auto [ow_lo, ow_hi] = conv_range(s, wd, ow, stride, padding);
                             if (ow_hi <= ow_lo) continue;
                             double acc = 0;
                             for (std::int64_t y = oh_lo; y < oh_hi; ++y) {
                               const double* in_row = xp + (i * h + y * stride + r - padding) * wd + (s - padding);
                               const double* g_row = g + (c * oh + y) * ow;
                               if (stride == 1) {
                                 acc += dot8(g_row + ow_lo, in_row + ow_lo, ow_hi - ow_lo);
                               } else {
                                 for (std::int64_t z = ow_lo; z < ow_hi; ++z) acc += g_row[z] * in_row[z * stride];
                               }
                             }
                             wn->grad[static_cast<std::size_t>(((c * ic + i) * kh + r) * kw + s)] += acc;
                           }
                         }
                       }
                     }
                   }
                   if (xn->requires_grad) {
                     xn->ensure_grad();
                     const double* wp = wn->value.data();
                     for (std::int64_t c = 0; c < oc; ++c) {
                       for (std::int64_t i = 0; i < ic; ++i) {
                         for (std::int64_t r = 0; r < kh; ++r) {
                           auto [oh_lo, oh_hi] = conv_range(r, h, oh, stride, padding);
                           for (std::int64_t s = 0; s < kw; ++s) {
                             const double wv = wp[((c * ic + i) * kh + r) * kw + s];
                             auto [ow_lo, ow_hi] = conv_range(s, wd, ow, stride, padding);
                             if (ow_hi <= ow_lo) continue;
                             for (std::int64_t y = oh_lo; y < oh_hi; ++y) {
                               double* dx_row = xn->grad.data() + (i * h + y * stride + r - padding) * wd + (s - padding);
                               const double* g_row = g + (c * oh + y) * ow;
                               if (stride == 1) {
#pragma omp simd
                                 for (std::int64_t z = ow_lo; z < ow_hi; ++z) dx_row[z] += wv * g_row[z];
                               } else {
                                 for (std::int64_t z = ow_lo; z < ow_hi; ++z) dx_row[z * stride] += wv * g_row[z];
                               }
                             }
                           }
                         }
                       }
                     }
                   }
                 });
}

Tensor maxpool2d(const Tensor& x, int window, int stride) {
  if (x.rank() != 3) throw std::invalid_argument("maxpool2d: expected CxHxW input");
  if (window < 1 || stride < 1) throw std::invalid_argument("maxpool2d: bad window/stride");
  const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::int64_t oh = (h - window) / stride + 1;
  const std::int64_t ow = (w - window) / stride + 1;
  if (h < window || w < window) {
    throw std::invalid_argument("maxpool2d: non-positive output spatial size");
  }
  std::vector<double> out(static_cast<std::size_t>(c * oh * ow));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  const double* xp = x.values().data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t y = 0; y < oh; ++y) {
      for (std::int64_t z = 0; z < ow; ++z) {
        double best = kNegInf;
        std::int64_t best_idx = -1;
        for (std::int64_t r = 0; r < window; ++r) {
          for (std::int64_t s = 0; s < window; ++s) {
            const std::int64_t idx = (ch * h + y * stride + r) * w + z * stride + s;
            if (xp[idx] > best) {  // ties keep the first (lowest) index
              best = xp[idx];
              best_idx = idx;
            }
          }
        }
        const std::int64_t o = (ch * oh + y) * ow + z;
        out[static_cast<std::size_t>(o)] = best;
        (*argmax)[static_cast<std::size_t>(o)] = best_idx;
      }
    }
  }
  NodePtr xn = x.node();
  return make_op({c, oh, ow}, std::move(out), {xn}, [xn, argmax](Node& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      xn->grad[static_cast<std::size_t>((*argmax)[i])] += self.grad[i];
    }
  });
}

Tensor cross_entropy_mean(const std::vector<Tensor>& logits,
                          const std::vector<int>& labels) {
  if (logits.empty() || logits.size() != labels.size()) {
    throw std::invalid_argument("cross_entropy_mean: batch size mismatch");
  }
  const double inv_b = 1.0 / static_cast<double>(logits.size());
  double total = 0;
  std::vector<NodePtr> parents;
  parents.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& l = logits[i].values();
    if (labels[i] < 0 || labels[i] >= static_cast<int>(l.size())) {
      throw std::invalid_argument("cross_entropy_mean: label out of range");
    }
    double mx = l[0];
    for (double v : l) mx = std::max(mx, v);
    double z = 0;
    for (double v : l) z += std::exp(v - mx);
    total += (mx + std::log(z)) - l[static_cast<std::size_t>(labels[i])];
    parents.push_back(logits[i].node());
  }
  auto parents_copy = parents;
  return make_op({}, {total * inv_b}, std::move(parents),
                 [parents_copy, labels, inv_b](Node& self) {
                   const double g = self.grad[0] * inv_b;
                   for (std::size_t i = 0; i < parents_copy.size(); ++i) {
                     auto& p = parents_copy[i];
                     if (!p->requires_grad) continue;
                     p->ensure_grad();
                     double mx = p->value[0];
                     for (double v : p->value) mx = std::max(mx, v);
                     double z = 0;
                     for (double v : p->value) z += std::exp(v - mx);
                     for (std::size_t j = 0; j < p->value.size(); ++j) {
                       double sm = std::exp(p->value[j] - mx) / z;
                       if (j == static_cast<std::size_t>(labels[i])) sm -= 1.0;
                       p->grad[j] += g * sm;
                     }
                   }
                 });
}

Tensor cv_squared(const Tensor& a) {
  if (a.rank() != 1) throw std::invalid_argument("cv_squared expects a rank-1 tensor");
  const double inv_n = 1.0 / static_cast<double>(a.size());
  Tensor m = scale(sum(a), inv_n);
  Tensor centered = sub_bcast(a, m);
  Tensor var = scale(sum(mul(centered, centered)), inv_n);
  Tensor mg = add_scalar(m, 1e-10);
  return div(var, mul(mg, mg));
}

}  // namespace moedr

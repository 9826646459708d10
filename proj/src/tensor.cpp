#include "ustar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "ustar/kernels.hpp"

namespace ustar::ad {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

[[noreturn]] void shape_error(const char* op, const std::vector<std::size_t>& a,
                              const std::vector<std::size_t>& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                              shape_str(b));
}

// Creates an op result. The backward closure is dropped when no input needs
// a gradient so inference graphs keep no history.
template <typename T>
Tensor<T> make_result(std::vector<std::size_t> shape, std::vector<T> value,
                      std::vector<NodePtr<T>> parents, std::function<void(Node<T>&)> fn) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr<T>& p) { return p->requires_grad; });
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return Tensor<T>(std::move(n));
}

template <typename T>
bool wants(const NodePtr<T>& p) {
  return p->requires_grad;
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::constant(std::vector<std::size_t> shape, std::vector<T> values) {
  if (product(shape) != values.size()) {
    throw std::invalid_argument("Tensor: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  }
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(std::vector<std::size_t> shape) {
  const std::size_t n = product(shape);
  return constant(std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
Tensor<T> Tensor<T>::variable(std::vector<std::size_t> shape, std::vector<T> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  t.node_->ensure_grad();
  return t;
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw std::invalid_argument("item: tensor is not a scalar");
  return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->value.size(), T(0));
}

template <typename T>
void Tensor<T>::backward() const {
  if (size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  if (!node_->requires_grad) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node<T>* n : order) {
    if (n->backward_fn) n->grad.assign(n->value.size(), T(0));
  }
  node_->ensure_grad();
  node_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// --- ops -------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows() || b.shape().size() != 2) shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<T> out(m * n);
  kernels::gemm<T>(false, false, m, n, k, a.value(), b.value(), out, false);
  auto pa = a.shared(), pb = b.shared();
  return make_result<T>({m, n}, std::move(out), {pa, pb}, [pa, pb, m, n, k](Node<T>& self) {
    if (wants(pa)) kernels::gemm<T>(false, true, m, k, n, self.grad, pb->value, pa->ensure_grad(), true);
    if (wants(pb)) kernels::gemm<T>(true, false, k, n, m, pa->value, self.grad, pb->ensure_grad(), true);
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (w.shape().size() != 2 || x.cols() != w.rows()) shape_error("linear", x.shape(), w.shape());
  if (b.size() != w.cols()) shape_error("linear(bias)", w.shape(), b.shape());
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i) std::copy(b.value().begin(), b.value().end(), out.begin() + i * n);
  kernels::gemm<T>(false, false, m, n, k, x.value(), w.value(), out, true);
  auto shape = x.shape();
  shape.back() = n;
  auto px = x.shared(), pw = w.shared(), pb = b.shared();
  return make_result<T>(std::move(shape), std::move(out), {px, pw, pb},
                        [px, pw, pb, m, n, k](Node<T>& self) {
                          if (wants(px)) kernels::gemm<T>(false, true, m, k, n, self.grad, pw->value, px->ensure_grad(), true);
                          if (wants(pw)) kernels::gemm<T>(true, false, k, n, m, px->value, self.grad, pw->ensure_grad(), true);
                          if (wants(pb)) {
                            auto& gb = pb->ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
                          }
                        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.size() != b.size()) shape_error("add", a.shape(), b.shape());
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  auto pa = a.shared(), pb = b.shared();
  return make_result<T>(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node<T>& self) {
    for (const auto& p : {pa, pb}) {
      if (!wants(p)) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.size() != b.size()) shape_error("mul", a.shape(), b.shape());
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto pa = a.shared(), pb = b.shared();
  return make_result<T>(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node<T>& self) {
    if (wants(pa)) {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (wants(pb)) {
      auto& g = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.value().begin(), a.value().end());
  for (auto& v : out) v *= s;
  auto pa = a.shared();
  return make_result<T>(a.shape(), std::move(out), {pa}, [pa, s](Node<T>& self) {
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.value()) total += v;
  auto pa = a.shared();
  return make_result<T>({1}, {total}, {pa}, [pa](Node<T>& self) {
    auto& g = pa->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  kernels::gelu_forward<T>(x.value(), out);
  auto px = x.shared();
  return make_result<T>(x.shape(), std::move(out), {px}, [px](Node<T>& self) {
    kernels::gelu_backward<T>(px->value, self.grad, px->ensure_grad());
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<T> out(x.size());
  kernels::softmax_rows<T>(rows, cols, x.value(), out);
  auto px = x.shared();
  return make_result<T>(x.shape(), std::move(out), {px}, [px, rows, cols](Node<T>& self) {
    auto& g = px->ensure_grad();
    // Output values are read back from the result node itself.
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * cols;
      const T* dy = self.grad.data() + r * cols;
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += y[c] * dy[c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (dy[c] - dot);
    }
  });
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows()) shape_error("concat_cols", a.shape(), b.shape());
  const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols(), w = ca + cb;
  std::vector<T> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.value().begin() + r * ca, ca, out.begin() + r * w);
    std::copy_n(b.value().begin() + r * cb, cb, out.begin() + r * w + ca);
  }
  auto pa = a.shared(), pb = b.shared();
  return make_result<T>({rows, w}, std::move(out), {pa, pb}, [pa, pb, rows, ca, cb, w](Node<T>& self) {
    if (wants(pa)) {
      auto& g = pa->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) g[r * ca + c] += self.grad[r * w + c];
    }
    if (wants(pb)) {
      auto& g = pb->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) g[r * cb + c] += self.grad[r * w + ca + c];
    }
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::vector<std::size_t> rows) {
  const std::size_t cols = x.cols();
  std::vector<T> out(rows.size() * cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows()) throw std::out_of_range("gather_rows: row index out of range");
    std::copy_n(x.value().begin() + rows[i] * cols, cols, out.begin() + i * cols);
  }
  auto px = x.shared();
  const std::size_t n = rows.size();
  return make_result<T>({n, cols}, std::move(out), {px}, [px, rows = std::move(rows), cols](Node<T>& self) {
    auto& g = px->ensure_grad();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < cols; ++c) g[rows[i] * cols + c] += self.grad[i * cols + c];
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gamma.size() != cols || beta.size() != cols) shape_error("layer_norm", x.shape(), gamma.shape());
  std::vector<T> out(x.size()), xhat(x.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.value().data() + r * cols;
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<T>(cols);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat[r * cols + c] = (in[c] - mean) * inv_std[r];
      out[r * cols + c] = xhat[r * cols + c] * gamma.value()[c] + beta.value()[c];
    }
  }
  auto px = x.shared(), pg = gamma.shared(), pb = beta.shared();
  return make_result<T>(x.shape(), std::move(out), {px, pg, pb},
                        [px, pg, pb, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* dy = self.grad.data() + r * cols;
                            const T* xh = xhat.data() + r * cols;
                            if (wants(pg)) {
                              auto& g = pg->ensure_grad();
                              for (std::size_t c = 0; c < cols; ++c) g[c] += dy[c] * xh[c];
                            }
                            if (wants(pb)) {
                              auto& g = pb->ensure_grad();
                              for (std::size_t c = 0; c < cols; ++c) g[c] += dy[c];
                            }
                            if (wants(px)) {
                              auto& g = px->ensure_grad();
                              T mean_d = 0, mean_dx = 0;
                              for (std::size_t c = 0; c < cols; ++c) {
                                const T d = dy[c] * pg->value[c];
                                mean_d += d;
                                mean_dx += d * xh[c];
                              }
                              mean_d /= static_cast<T>(cols);
                              mean_dx /= static_cast<T>(cols);
                              for (std::size_t c = 0; c < cols; ++c) {
                                const T d = dy[c] * pg->value[c];
                                g[r * cols + c] += inv_std[r] * (d - mean_d - xh[c] * mean_dx);
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                    std::vector<std::size_t> q_offsets, std::vector<std::size_t> k_offsets) {
  const std::size_t w = q.cols();
  if (k.cols() != w || v.cols() != w) shape_error("attention", q.shape(), k.shape());
  if (k.rows() != v.rows()) shape_error("attention(k/v)", k.shape(), v.shape());
  if (heads == 0 || w % heads != 0) {
    throw std::invalid_argument("attention: width " + std::to_string(w) +
                                " not divisible by heads " + std::to_string(heads));
  }
  if (q_offsets.size() != k_offsets.size() || q_offsets.empty() ||
      q_offsets.back() != q.rows() || k_offsets.back() != k.rows() || q_offsets.front() != 0 ||
      k_offsets.front() != 0) {
    throw std::invalid_argument("attention: segment offsets do not cover q/k rows");
  }
  auto layout_q = std::make_shared<std::vector<std::size_t>>(std::move(q_offsets));
  auto layout_k = std::make_shared<std::vector<std::size_t>>(std::move(k_offsets));
  kernels::AttentionLayout layout{heads, w, *layout_q, *layout_k};
  const auto poff = layout.prob_offsets();
  auto probs = std::make_shared<std::vector<T>>(poff.back());
  std::vector<T> out(q.size());
  kernels::attention_forward<T>(layout, q.value(), k.value(), v.value(), out, *probs);
  auto pq = q.shared(), pk = k.shared(), pv = v.shared();
  return make_result<T>(q.shape(), std::move(out), {pq, pk, pv},
                        [pq, pk, pv, probs, layout_q, layout_k, heads, w](Node<T>& self) {
                          kernels::AttentionLayout lay{heads, w, *layout_q, *layout_k};
                          // Scratch for inputs that do not need gradients.
                          std::vector<T> sq, sk, sv;
                          auto grad_of = [](const NodePtr<T>& p, std::vector<T>& scratch) -> std::span<T> {
                            if (wants(p)) return p->ensure_grad();
                            scratch.assign(p->value.size(), T(0));
                            return scratch;
                          };
                          kernels::attention_backward<T>(lay, pq->value, pk->value, pv->value, *probs,
                                                         self.grad, grad_of(pq, sq), grad_of(pk, sk),
                                                         grad_of(pv, sv));
                        });
}

template <typename T>
Tensor<T> grouped_linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         bool shared_input) {
  if (w.shape().size() != 3) shape_error("grouped_linear", x.shape(), w.shape());
  const std::size_t groups = w.shape()[0], in = w.shape()[1], outw = w.shape()[2];
  if (b.size() != groups * outw) shape_error("grouped_linear(bias)", w.shape(), b.shape());
  const std::size_t xin = shared_input ? in : groups * in;
  if (x.cols() != xin) shape_error("grouped_linear(input)", x.shape(), w.shape());
  const std::size_t n = x.rows(), total = groups * outw;
  std::vector<T> out(n * total);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(b.value().begin(), b.value().end(), out.begin() + i * total);
  if (shared_input) {
    // One gemm against the [in, groups*out] view of the stacked weights.
    std::vector<T> wcat(in * total);
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t r = 0; r < in; ++r)
        std::copy_n(w.value().begin() + (g * in + r) * outw, outw, wcat.begin() + r * total + g * outw);
    kernels::gemm<T>(false, false, n, total, in, x.value(), wcat, out, true);
  } else {
    std::vector<T> xs(n * in), ys(n * outw);
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t i = 0; i < n; ++i) std::copy_n(x.value().begin() + i * xin + g * in, in, xs.begin() + i * in);
      kernels::gemm<T>(false, false, n, outw, in, xs, w.value().subspan(g * in * outw, in * outw), ys, false);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < outw; ++o) out[i * total + g * outw + o] += ys[i * outw + o];
    }
  }
  auto px = x.shared(), pw = w.shared(), pb = b.shared();
  return make_result<T>({n, total}, std::move(out), {px, pw, pb},
                        [px, pw, pb, groups, in, outw, n, total, xin, shared_input](Node<T>& self) {
                          if (wants(pb)) {
                            auto& gb = pb->ensure_grad();
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < total; ++j) gb[j] += self.grad[i * total + j];
                          }
                          std::vector<T> xs(n * in), dys(n * outw), dxs(n * in);
                          for (std::size_t g = 0; g < groups; ++g) {
                            for (std::size_t i = 0; i < n; ++i) {
                              std::copy_n(self.grad.begin() + i * total + g * outw, outw, dys.begin() + i * outw);
                              const std::size_t col = shared_input ? 0 : g * in;
                              std::copy_n(px->value.begin() + i * xin + col, in, xs.begin() + i * in);
                            }
                            const std::span<const T> wg(pw->value.data() + g * in * outw, in * outw);
                            if (wants(pw)) {
                              std::span<T> gw(pw->ensure_grad().data() + g * in * outw, in * outw);
                              kernels::gemm<T>(true, false, in, outw, n, xs, dys, gw, true);
                            }
                            if (wants(px)) {
                              kernels::gemm<T>(false, true, n, in, outw, dys, wg, dxs, false);
                              auto& gx = px->ensure_grad();
                              const std::size_t col = shared_input ? 0 : g * in;
                              for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t c = 0; c < in; ++c) gx[i * xin + col + c] += dxs[i * in + c];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> smooth_l1(const Tensor<T>& pred, const Tensor<T>& target, T beta) {
  if (pred.size() != target.size() || pred.size() == 0) shape_error("smooth_l1", pred.shape(), target.shape());
  const std::size_t n = pred.size();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = pred.value()[i] - target.value()[i];
    const T a = std::abs(d);
    total += a < beta ? T(0.5) * d * d / beta : a - T(0.5) * beta;
  }
  auto pp = pred.shared(), pt = target.shared();
  return make_result<T>({1}, {total / static_cast<T>(n)}, {pp, pt}, [pp, pt, n, beta](Node<T>& self) {
    const T gs = self.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = pp->value[i] - pt->value[i];
      const T g = gs * std::clamp(d / beta, T(-1), T(1));
      if (wants(pp)) pp->ensure_grad()[i] += g;
      if (wants(pt)) pt->ensure_grad()[i] -= g;
    }
  });
}

template <typename T>
Tensor<T> action_smooth_l1(const Tensor<T>& pred, const Tensor<T>& target, std::span<const T> mask,
                           T beta) {
  if (pred.size() != target.size() || pred.cols() % 6 != 0) shape_error("action_smooth_l1", pred.shape(), target.shape());
  const std::size_t n = pred.rows(), views = pred.cols() / 6;
  if (mask.size() != n * views) throw std::invalid_argument("action_smooth_l1: mask size mismatch");
  auto diff = [views](const std::vector<T>& p, const std::vector<T>& t, std::size_t i, std::size_t v, std::size_t c) {
    const std::size_t idx = (i * views + v) * 6 + c;
    T d = p[idx] - t[idx];
    if (c >= 3) d = d - T(360) * std::floor((d + T(180)) / T(360));
    return d;
  };
  T count = 0;
  for (T m : mask) count += m;
  if (count <= T(0)) throw std::invalid_argument("action_smooth_l1: empty mask");
  auto pp = pred.shared(), pt = target.shared();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t v = 0; v < views; ++v) {
      if (mask[i * views + v] == T(0)) continue;
      T view_loss = 0;
      for (std::size_t c = 0; c < 6; ++c) {
        const T d = diff(pp->value, pt->value, i, v, c);
        const T a = std::abs(d);
        view_loss += a < beta ? T(0.5) * d * d / beta : a - T(0.5) * beta;
      }
      total += mask[i * views + v] * view_loss / T(6);
    }
  }
  std::vector<T> mask_copy(mask.begin(), mask.end());
  return make_result<T>({1}, {total / count}, {pp, pt},
                        [pp, pt, n, views, beta, count, diff, mask_copy = std::move(mask_copy)](Node<T>& self) {
                          const T gs = self.grad[0] / (count * T(6));
                          for (std::size_t i = 0; i < n; ++i) {
                            for (std::size_t v = 0; v < views; ++v) {
                              const T m = mask_copy[i * views + v];
                              if (m == T(0)) continue;
                              for (std::size_t c = 0; c < 6; ++c) {
                                const std::size_t idx = (i * views + v) * 6 + c;
                                const T g = gs * m * std::clamp(diff(pp->value, pt->value, i, v, c) / beta, T(-1), T(1));
                                if (wants(pp)) pp->ensure_grad()[idx] += g;
                                if (wants(pt)) pt->ensure_grad()[idx] -= g;
                              }
                            }
                          }
                        });
}

#define USTAR_INSTANTIATE(T)                                                                       \
  template class Tensor<T>;                                                                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> scale(const Tensor<T>&, T);                                                   \
  template Tensor<T> sum(const Tensor<T>&);                                                        \
  template Tensor<T> gelu(const Tensor<T>&);                                                       \
  template Tensor<T> softmax(const Tensor<T>&);                                                    \
  template Tensor<T> concat_cols(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> gather_rows(const Tensor<T>&, std::vector<std::size_t>);                      \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);          \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,  \
                               std::vector<std::size_t>, std::vector<std::size_t>);                \
  template Tensor<T> grouped_linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool);   \
  template Tensor<T> smooth_l1(const Tensor<T>&, const Tensor<T>&, T);                             \
  template Tensor<T> action_smooth_l1(const Tensor<T>&, const Tensor<T>&, std::span<const T>, T);

USTAR_INSTANTIATE(float)
USTAR_INSTANTIATE(double)

#undef USTAR_INSTANTIATE

}  // namespace ustar::ad

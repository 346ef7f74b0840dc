#include "eerbench/nn.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include "eerbench/rng.hpp"
#include "json.hpp"

namespace eerbench::nn {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

void debug_check_finite(const Mat& m) {
#ifndef NDEBUG
  for (double x : m.v) assert(std::isfinite(x));
#else
  (void)m;
#endif
}

void ensure_grad(Node& n) {
  if (n.grad.rows != n.value.rows || n.grad.cols != n.value.cols)
    n.grad = Mat(n.value.rows, n.value.cols);
  else
    std::fill(n.grad.v.begin(), n.grad.v.end(), 0.0);
}

NodePtr make_result(Mat value, std::vector<NodePtr> parents,
                    std::function<void()> backprop) {
  debug_check_finite(value);
  auto n = std::make_shared<Node>(std::move(value));
  n->parents = std::move(parents);
  n->backprop = std::move(backprop);
  for (const auto& p : n->parents) n->requires_grad |= p->requires_grad;
  return n;
}

}  // namespace

NodePtr constant(Mat v) { return std::make_shared<Node>(std::move(v)); }

NodePtr parameter(Mat v) { return std::make_shared<Node>(std::move(v), true); }

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  if (a->value.cols != b->value.rows)
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a->value) + " vs " + shape_str(b->value));
  const auto& A = a->value;
  const auto& B = b->value;
  Mat out(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t k = 0; k < A.cols; ++k) {
      const double av = A.at(i, k);
      if (av == 0.0) continue;
      const double* brow = B.row(k);
      double* orow = out.row(i);
      for (std::size_t j = 0; j < B.cols; ++j) orow[j] += av * brow[j];
    }
  auto n = make_result(std::move(out), {a, b}, nullptr);
  Node* self = n.get();
  n->backprop = [self, a, b]() {
    const Mat& G = self->grad;
    // dA += G * B^T
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t k = 0; k < a->value.cols; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < G.cols; ++j)
          acc += G.at(i, j) * b->value.at(k, j);
        a->grad.at(i, k) += acc;
      }
    // dB += A^T * G
    for (std::size_t k = 0; k < b->value.rows; ++k)
      for (std::size_t j = 0; j < G.cols; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < G.rows; ++i)
          acc += a->value.at(i, k) * G.at(i, j);
        b->grad.at(k, j) += acc;
      }
  };
  return n;
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument("add: shape mismatch " + shape_str(a->value) +
                                " vs " + shape_str(b->value));
  Mat out = a->value;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b->value.v[i];
  auto n = make_result(std::move(out), {a, b}, nullptr);
  Node* self = n.get();
  n->backprop = [self, a, b]() {
    for (std::size_t i = 0; i < self->grad.v.size(); ++i) {
      a->grad.v[i] += self->grad.v[i];
      b->grad.v[i] += self->grad.v[i];
    }
  };
  return n;
}

NodePtr mul_elem(const NodePtr& a, const NodePtr& b) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument("mul_elem: shape mismatch " + shape_str(a->value) +
                                " vs " + shape_str(b->value));
  Mat out = a->value;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b->value.v[i];
  auto n = make_result(std::move(out), {a, b}, nullptr);
  Node* self = n.get();
  n->backprop = [self, a, b]() {
    for (std::size_t i = 0; i < self->grad.v.size(); ++i) {
      a->grad.v[i] += self->grad.v[i] * b->value.v[i];
      b->grad.v[i] += self->grad.v[i] * a->value.v[i];
    }
  };
  return n;
}

NodePtr scale(const NodePtr& x, double s) {
  Mat out = x->value;
  for (double& v : out.v) v *= s;
  auto n = make_result(std::move(out), {x}, nullptr);
  Node* self = n.get();
  n->backprop = [self, x, s]() {
    for (std::size_t i = 0; i < self->grad.v.size(); ++i)
      x->grad.v[i] += s * self->grad.v[i];
  };
  return n;
}

NodePtr add_bias(const NodePtr& x, const NodePtr& bias) {
  if (bias->value.rows != 1 || bias->value.cols != x->value.cols)
    throw std::invalid_argument("add_bias: bias " + shape_str(bias->value) +
                                " does not broadcast over " + shape_str(x->value));
  Mat out = x->value;
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j) out.at(i, j) += bias->value.at(0, j);
  auto n = make_result(std::move(out), {x, bias}, nullptr);
  Node* self = n.get();
  n->backprop = [self, x, bias]() {
    for (std::size_t i = 0; i < self->grad.rows; ++i)
      for (std::size_t j = 0; j < self->grad.cols; ++j) {
        x->grad.at(i, j) += self->grad.at(i, j);
        bias->grad.at(0, j) += self->grad.at(i, j);
      }
  };
  return n;
}

NodePtr relu(const NodePtr& x) {
  Mat out = x->value;
  for (double& v : out.v) v = std::max(0.0, v);
  auto n = make_result(std::move(out), {x}, nullptr);
  Node* self = n.get();
  n->backprop = [self, x]() {
    for (std::size_t i = 0; i < self->grad.v.size(); ++i)
      if (x->value.v[i] > 0.0) x->grad.v[i] += self->grad.v[i];
  };
  return n;
}

NodePtr softmax_rows(const NodePtr& x) {
  Mat out = x->value;
  for (std::size_t i = 0; i < out.rows; ++i) {
    double* row = out.row(i);
    const double mx = *std::max_element(row, row + out.cols);
    double sum = 0.0;
    for (std::size_t j = 0; j < out.cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < out.cols; ++j) row[j] /= sum;
  }
  auto n = make_result(std::move(out), {x}, nullptr);
  Node* self = n.get();
  n->backprop = [self, x]() {
    for (std::size_t i = 0; i < self->grad.rows; ++i) {
      const double* y = self->value.row(i);
      const double* g = self->grad.row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < self->grad.cols; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < self->grad.cols; ++j)
        x->grad.at(i, j) += (g[j] - dot) * y[j];
    }
  };
  return n;
}

NodePtr sum_all(const NodePtr& x) {
  Mat out(1, 1);
  for (double v : x->value.v) out.v[0] += v;
  auto n = make_result(std::move(out), {x}, nullptr);
  Node* self = n.get();
  n->backprop = [self, x]() {
    for (double& g : x->grad.v) g += self->grad.v[0];
  };
  return n;
}

NodePtr mean_all(const NodePtr& x) {
  if (x->value.v.empty()) throw std::invalid_argument("mean_all: empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<double>(x->value.v.size()));
}

NodePtr reshape(const NodePtr& x, std::size_t rows, std::size_t cols) {
  if (rows * cols != x->value.v.size())
    throw std::invalid_argument("reshape: " + shape_str(x->value) +
                                " cannot become " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  Mat out(rows, cols);
  out.v = x->value.v;
  auto n = make_result(std::move(out), {x}, nullptr);
  Node* self = n.get();
  n->backprop = [self, x]() {
    for (std::size_t i = 0; i < self->grad.v.size(); ++i)
      x->grad.v[i] += self->grad.v[i];
  };
  return n;
}

NodePtr block_lmul(const NodePtr& a, const NodePtr& x) {
  const std::size_t p = a->value.rows;
  const std::size_t q = a->value.cols;
  if (q == 0 || x->value.rows % q != 0)
    throw std::invalid_argument("block_lmul: rows of " + shape_str(x->value) +
                                " not a multiple of " + shape_str(a->value) +
                                " columns");
  const std::size_t blocks = x->value.rows / q;
  const std::size_t d = x->value.cols;
  Mat out(blocks * p, d);
  for (std::size_t blk = 0; blk < blocks; ++blk)
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t k = 0; k < q; ++k) {
        const double av = a->value.at(i, k);
        if (av == 0.0) continue;
        const double* xrow = x->value.row(blk * q + k);
        double* orow = out.row(blk * p + i);
        for (std::size_t j = 0; j < d; ++j) orow[j] += av * xrow[j];
      }
  auto n = make_result(std::move(out), {a, x}, nullptr);
  Node* self = n.get();
  n->backprop = [self, a, x, blocks, p, q, d]() {
    for (std::size_t blk = 0; blk < blocks; ++blk) {
      for (std::size_t i = 0; i < p; ++i) {
        const double* grow = self->grad.row(blk * p + i);
        for (std::size_t k = 0; k < q; ++k) {
          // dA[i,k] += sum_j G[i,j] * X[k,j]; dX[k,j] += A[i,k] * G[i,j]
          const double* xrow = x->value.row(blk * q + k);
          double* xgrow = x->grad.row(blk * q + k);
          const double av = a->value.at(i, k);
          double acc = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            acc += grow[j] * xrow[j];
            xgrow[j] += av * grow[j];
          }
          a->grad.at(i, k) += acc;
        }
      }
    }
  };
  return n;
}

NodePtr mean_pool_rows(const NodePtr& x, std::size_t group) {
  if (group == 0 || x->value.rows % group != 0)
    throw std::invalid_argument("mean_pool_rows: rows of " + shape_str(x->value) +
                                " not a multiple of group " +
                                std::to_string(group));
  const std::size_t blocks = x->value.rows / group;
  Mat out(blocks, x->value.cols);
  for (std::size_t blk = 0; blk < blocks; ++blk)
    for (std::size_t r = 0; r < group; ++r)
      for (std::size_t j = 0; j < x->value.cols; ++j)
        out.at(blk, j) += x->value.at(blk * group + r, j) /
                          static_cast<double>(group);
  auto n = make_result(std::move(out), {x}, nullptr);
  Node* self = n.get();
  n->backprop = [self, x, blocks, group]() {
    for (std::size_t blk = 0; blk < blocks; ++blk)
      for (std::size_t r = 0; r < group; ++r)
        for (std::size_t j = 0; j < self->grad.cols; ++j)
          x->grad.at(blk * group + r, j) +=
              self->grad.at(blk, j) / static_cast<double>(group);
  };
  return n;
}

static void check_labels(const Mat& logits, const std::vector<int>& labels) {
  if (labels.size() != logits.rows)
    throw std::invalid_argument("loss: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(logits.rows) +
                                " logit rows");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols)
      throw std::invalid_argument("loss: label " + std::to_string(y) +
                                  " outside [0, " + std::to_string(logits.cols) +
                                  ")");
}

NodePtr cross_entropy(const NodePtr& logits, const std::vector<int>& labels) {
  check_labels(logits->value, labels);
  const Mat& Z = logits->value;
  const auto B = Z.rows;
  auto probs = std::make_shared<Mat>(Z.rows, Z.cols);
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const double* z = Z.row(i);
    const double mx = *std::max_element(z, z + Z.cols);
    double sum = 0.0;
    for (std::size_t j = 0; j < Z.cols; ++j) sum += std::exp(z[j] - mx);
    const double lse = mx + std::log(sum);
    total += lse - z[static_cast<std::size_t>(labels[i])];
    for (std::size_t j = 0; j < Z.cols; ++j)
      probs->at(i, j) = std::exp(z[j] - lse);
  }
  Mat out(1, 1);
  out.v[0] = total / static_cast<double>(B);
  auto n = make_result(std::move(out), {logits}, nullptr);
  Node* self = n.get();
  n->backprop = [self, logits, probs, labels, B]() {
    const double g = self->grad.v[0] / static_cast<double>(B);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < logits->value.cols; ++j) {
        const double onehot = j == static_cast<std::size_t>(labels[i]) ? 1.0 : 0.0;
        logits->grad.at(i, j) += g * (probs->at(i, j) - onehot);
      }
  };
  return n;
}

NodePtr multiclass_hinge(const NodePtr& logits, const std::vector<int>& labels) {
  check_labels(logits->value, labels);
  const Mat& Z = logits->value;
  const auto B = Z.rows;
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    for (std::size_t k = 0; k < Z.cols; ++k) {
      if (k == y) continue;
      total += std::max(0.0, 1.0 + Z.at(i, k) - Z.at(i, y));
    }
  }
  Mat out(1, 1);
  out.v[0] = total / static_cast<double>(B);
  auto n = make_result(std::move(out), {logits}, nullptr);
  Node* self = n.get();
  n->backprop = [self, logits, labels, B]() {
    const double g = self->grad.v[0] / static_cast<double>(B);
    for (std::size_t i = 0; i < B; ++i) {
      const auto y = static_cast<std::size_t>(labels[i]);
      for (std::size_t k = 0; k < logits->value.cols; ++k) {
        if (k == y) continue;
        if (1.0 + logits->value.at(i, k) - logits->value.at(i, y) > 0.0) {
          logits->grad.at(i, k) += g;
          logits->grad.at(i, y) -= g;
        }
      }
    }
  };
  return n;
}

NodePtr loss(const std::string& kind, const NodePtr& logits,
             const std::vector<int>& labels) {
  if (kind == "cross_entropy") return cross_entropy(logits, labels);
  if (kind == "hinge" || kind == "multiclass_hinge")
    return multiclass_hinge(logits, labels);
  throw std::invalid_argument("unknown loss kind '" + kind + "'");
}

void backward(const NodePtr& l) {
  if (l->value.rows != 1 || l->value.cols != 1)
    throw std::invalid_argument("backward expects a scalar, got " +
                                shape_str(l->value));
  // Iterative post-order DFS for reverse topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> done;
  std::vector<std::pair<Node*, std::size_t>> stack{{l.get(), 0}};
  std::unordered_set<Node*> on_path{l.get()};
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (!done.count(parent) && on_path.insert(parent).second)
        stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      done.insert(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) ensure_grad(*n);
  l->grad.v[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

// ---------------------------------------------------------------------------
// Model zoo

static void check_config(const ModelConfig& cfg) {
  if (cfg.tag != "linear_hinge" && cfg.tag != "mlp" && cfg.tag != "graphconv")
    throw std::invalid_argument("unknown model tag '" + cfg.tag + "'");
  if (cfg.channels < 1 || cfg.dim < 1 || cfg.num_classes < 2)
    throw std::invalid_argument("model dims must be positive (channels, dim, >=2 classes)");
  if (cfg.tag != "linear_hinge" && cfg.hidden.empty())
    throw std::invalid_argument("'" + cfg.tag + "' needs at least one hidden width");
  for (int h : cfg.hidden)
    if (h < 1) throw std::invalid_argument("hidden widths must be positive");
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  check_config(cfg_);
  Rng rng(derive_seed(seed, "init/" + cfg_.tag));
  auto uniform_param = [&](const std::string& name, std::size_t rows,
                           std::size_t cols, std::size_t fan_in) {
    Mat m(rows, cols);
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (double& v : m.v) v = rng.uniform(-bound, bound);
    params_.emplace_back(name, parameter(std::move(m)));
  };
  const auto flat = static_cast<std::size_t>(cfg_.channels) *
                    static_cast<std::size_t>(cfg_.dim);
  const auto K = static_cast<std::size_t>(cfg_.num_classes);

  if (cfg_.tag == "linear_hinge") {
    uniform_param("head.weight", flat, K, flat);
    uniform_param("head.bias", 1, K, flat);
  } else if (cfg_.tag == "mlp") {
    std::size_t prev = flat;
    for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
      const auto h = static_cast<std::size_t>(cfg_.hidden[i]);
      uniform_param("fc" + std::to_string(i) + ".weight", prev, h, prev);
      uniform_param("fc" + std::to_string(i) + ".bias", 1, h, prev);
      prev = h;
    }
    uniform_param("head.weight", prev, K, prev);
    uniform_param("head.bias", 1, K, prev);
  } else {  // graphconv
    const auto c = static_cast<std::size_t>(cfg_.channels);
    params_.emplace_back("adjacency", parameter(Mat(c, c)));  // zeros: uniform mixing
    std::size_t prev = static_cast<std::size_t>(cfg_.dim);
    for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
      const auto h = static_cast<std::size_t>(cfg_.hidden[i]);
      uniform_param("conv" + std::to_string(i) + ".weight", prev, h, prev);
      prev = h;
    }
    uniform_param("head.weight", prev, K, prev);
    uniform_param("head.bias", 1, K, prev);
  }
}

NodePtr Model::param(const std::string& name) const {
  for (const auto& [n, p] : params_)
    if (n == name) return p;
  throw std::logic_error("no parameter named '" + name + "'");
}

NodePtr Model::forward(const Mat& batch) const {
  const auto flat = static_cast<std::size_t>(cfg_.channels) *
                    static_cast<std::size_t>(cfg_.dim);
  if (batch.cols != flat || batch.rows == 0)
    throw std::invalid_argument(
        "forward: batch is " + std::to_string(batch.rows) + "x" +
        std::to_string(batch.cols) + ", model expects Nx" + std::to_string(flat));

  NodePtr x = constant(batch);
  if (cfg_.tag == "linear_hinge") {
    return add_bias(matmul(x, param("head.weight")), param("head.bias"));
  }
  if (cfg_.tag == "mlp") {
    for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
      const std::string id = std::to_string(i);
      x = relu(add_bias(matmul(x, param("fc" + id + ".weight")),
                        param("fc" + id + ".bias")));
    }
    return add_bias(matmul(x, param("head.weight")), param("head.bias"));
  }
  // graphconv: per layer X <- relu(softmax_rows(A) . X . W) over the channel
  // graph, then channel-mean pooling and a linear head.
  const auto c = static_cast<std::size_t>(cfg_.channels);
  x = reshape(x, batch.rows * c, static_cast<std::size_t>(cfg_.dim));
  const NodePtr mixing = softmax_rows(param("adjacency"));
  for (std::size_t i = 0; i < cfg_.hidden.size(); ++i)
    x = relu(matmul(block_lmul(mixing, x),
                    param("conv" + std::to_string(i) + ".weight")));
  x = mean_pool_rows(x, c);
  return add_bias(matmul(x, param("head.weight")), param("head.bias"));
}

std::string Model::loss_kind() const {
  return cfg_.tag == "linear_hinge" ? "hinge" : "cross_entropy";
}

std::int64_t Model::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, p] : params_)
    n += static_cast<std::int64_t>(p->value.v.size());
  return n;
}

void Model::zero_grad() {
  for (auto& [name, p] : params_) ensure_grad(*p);
}

void Model::sgd_step(double lr, double weight_decay) {
  for (auto& [name, p] : params_) {
    if (p->grad.v.size() != p->value.v.size()) ensure_grad(*p);
    for (std::size_t i = 0; i < p->value.v.size(); ++i)
      p->value.v[i] -= lr * (p->grad.v[i] + weight_decay * p->value.v[i]);
  }
}

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
  return Model(cfg, seed);
}

// ---------------------------------------------------------------------------
// Checkpoints

static constexpr char kParamMagic[4] = {'E', 'E', 'R', 'P'};

static void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

static void put_f64(std::string& out, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

static std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

static double get_f64(const unsigned char* p) {
  std::uint64_t u = 0;
  for (int i = 7; i >= 0; --i) u = (u << 8) | p[i];
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

void save_checkpoint(const Model& m, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string());

  ordered_json index;
  index["format_version"] = 1;
  index["model"] = {{"tag", m.config().tag},
                    {"channels", m.config().channels},
                    {"dim", m.config().dim},
                    {"num_classes", m.config().num_classes},
                    {"hidden", m.config().hidden}};
  ordered_json plist = ordered_json::array();
  for (const auto& [name, p] : m.parameters()) {
    const std::string file = name + ".bin";
    std::string bytes;
    bytes.append(kParamMagic, 4);
    put_u32(bytes, 1);
    put_u32(bytes, static_cast<std::uint32_t>(p->value.rows));
    put_u32(bytes, static_cast<std::uint32_t>(p->value.cols));
    put_u32(bytes, 0);
    for (double v : p->value.v) put_f64(bytes, v);
    std::ofstream f(dir / file, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / file).string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    plist.push_back({{"name", name},
                     {"file", file},
                     {"rows", p->value.rows},
                     {"cols", p->value.cols}});
  }
  index["params"] = std::move(plist);
  std::ofstream f(dir / "index.json", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint index");
  f << index.dump(2) << "\n";
}

Model load_checkpoint(const fs::path& dir) {
  std::ifstream f(dir / "index.json", std::ios::binary);
  if (!f) throw std::runtime_error("no checkpoint index in " + dir.string());
  ordered_json index;
  try {
    index = ordered_json::parse(std::string(
        (std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()));
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("checkpoint index invalid: ") + e.what());
  }
  if (index.at("format_version").get<int>() != 1)
    throw std::runtime_error("unsupported checkpoint format_version");

  ModelConfig cfg;
  cfg.tag = index.at("model").at("tag").get<std::string>();
  cfg.channels = index.at("model").at("channels").get<int>();
  cfg.dim = index.at("model").at("dim").get<int>();
  cfg.num_classes = index.at("model").at("num_classes").get<int>();
  cfg.hidden = index.at("model").at("hidden").get<std::vector<int>>();
  Model m(cfg, 0);

  for (const auto& entry : index.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::string file = entry.at("file").get<std::string>();
    std::ifstream pf(dir / file, std::ios::binary);
    if (!pf) throw std::runtime_error("checkpoint missing " + file);
    const std::string bytes((std::istreambuf_iterator<char>(pf)),
                            std::istreambuf_iterator<char>());
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kParamMagic, 4) != 0)
      throw std::runtime_error("bad parameter file " + file);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (get_u32(p + 4) != 1)
      throw std::runtime_error("unsupported parameter format in " + file);
    const std::uint32_t rows = get_u32(p + 8);
    const std::uint32_t cols = get_u32(p + 12);
    if (bytes.size() != 20 + static_cast<std::size_t>(rows) * cols * 8)
      throw std::runtime_error("parameter file " + file + " truncated");

    bool found = false;
    for (const auto& [pname, node] : m.parameters()) {
      if (pname != name) continue;
      found = true;
      if (node->value.rows != rows || node->value.cols != cols)
        throw std::runtime_error("parameter " + name + " is " +
                                 std::to_string(rows) + "x" + std::to_string(cols) +
                                 " on disk, model expects " + shape_str(node->value));
      for (std::size_t i = 0; i < node->value.v.size(); ++i)
        node->value.v[i] = get_f64(p + 20 + i * 8);
    }
    if (!found) throw std::runtime_error("unexpected parameter '" + name + "'");
  }
  return m;
}

}  // namespace eerbench::nn

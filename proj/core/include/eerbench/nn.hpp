#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "eerbench/mat.hpp"

namespace eerbench::nn {

// One value in the computation graph. Results hold back-references to their
// inputs plus a closure that routes this node's gradient to them; backward()
// walks the graph in reverse topological order. All math is 64-bit.
struct Node {
  Mat value;
  Mat grad;  // allocated lazily; same shape as value once populated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;

  explicit Node(Mat v, bool rg = false) : value(std::move(v)), requires_grad(rg) {}
};

using NodePtr = std::shared_ptr<Node>;

NodePtr constant(Mat v);
NodePtr parameter(Mat v);

// Primitives. Shape mismatches throw std::invalid_argument naming both
// shapes. Each result records exact reverse-mode gradients.
NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr mul_elem(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& x, double s);
NodePtr add_bias(const NodePtr& x, const NodePtr& bias);  // bias is 1 x cols
NodePtr relu(const NodePtr& x);
NodePtr softmax_rows(const NodePtr& x);
NodePtr sum_all(const NodePtr& x);
NodePtr mean_all(const NodePtr& x);
NodePtr reshape(const NodePtr& x, std::size_t rows, std::size_t cols);

// Per-sample left-multiply: x is (batch * a.rows) x d; each block of a.rows
// consecutive rows is multiplied by `a` on the left.
NodePtr block_lmul(const NodePtr& a, const NodePtr& x);

// Collapses each run of `group` consecutive rows to their mean.
NodePtr mean_pool_rows(const NodePtr& x, std::size_t group);

// Mean over the batch of -ln softmax(logits)[label]; numerically fused, so
// the logits gradient is (softmax - onehot) / batch.
NodePtr cross_entropy(const NodePtr& logits, const std::vector<int>& labels);

// Mean over the batch of sum_{k != y} max(0, 1 + logit_k - logit_y).
NodePtr multiclass_hinge(const NodePtr& logits, const std::vector<int>& labels);

NodePtr loss(const std::string& kind, const NodePtr& logits,
             const std::vector<int>& labels);

// Populates gradients of every node reachable from `l`, which must be 1x1.
void backward(const NodePtr& l);

// ---------------------------------------------------------------------------
// Model zoo: one representative per architecture family.

struct ModelConfig {
  std::string tag = "mlp";  // "linear_hinge" | "mlp" | "graphconv"
  int channels = 0;
  int dim = 0;  // feature values per channel
  int num_classes = 0;
  // mlp: hidden layer widths; graphconv: per-layer output widths.
  std::vector<int> hidden = {64};
};

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  // batch is batch x (channels * dim), row-major per sample; returns the
  // batch x num_classes logits node. Builds a fresh graph; parameters are
  // shared across calls.
  NodePtr forward(const Mat& batch) const;

  const ModelConfig& config() const { return cfg_; }
  const std::string& tag() const { return cfg_.tag; }
  // hinge for the linear baseline, cross_entropy otherwise
  std::string loss_kind() const;
  std::int64_t parameter_count() const;

  const std::vector<std::pair<std::string, NodePtr>>& parameters() const {
    return params_;
  }
  void zero_grad();

  // p <- p - lr * (grad + weight_decay * p), in declaration order.
  void sgd_step(double lr, double weight_decay);

 private:
  NodePtr param(const std::string& name) const;
  ModelConfig cfg_;
  std::vector<std::pair<std::string, NodePtr>> params_;
};

Model build_model(const ModelConfig& cfg, std::uint64_t seed);

// Checkpoints: one binary file per parameter (20-byte header: magic "EERP",
// version, rows, cols, little-endian, then float64 row-major) plus an
// index.json tying names to files and recording the model config.
void save_checkpoint(const Model& m, const std::filesystem::path& dir);
Model load_checkpoint(const std::filesystem::path& dir);

}  // namespace eerbench::nn

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vlfuse/insitu/graph.hpp"

namespace vlfuse::insitu {

inline constexpr const char* kNullLabel = "null";

/// Label <-> class index map. Index 0 is always the null class.
class ClassRegistry {
 public:
  ClassRegistry() : labels_{kNullLabel} {}

  int add(const std::string& label) {
    require(!label.empty(), "empty class label");
    require(label != kNullLabel || labels_.size() == 0, "label 'null' is reserved");
    if (auto i = index_of(label)) return *i;
    labels_.push_back(label);
    return static_cast<int>(labels_.size()) - 1;
  }

  std::optional<int> index_of(const std::string& label) const {
    for (std::size_t i = 1; i < labels_.size(); ++i)
      if (labels_[i] == label) return static_cast<int>(i);
    return std::nullopt;
  }

  const std::string& label(int index) const { return labels_.at(static_cast<std::size_t>(index)); }
  int size() const { return static_cast<int>(labels_.size()); }
  /// Labels of the positive classes (index >= 1).
  std::vector<std::string> positive_labels() const { return {labels_.begin() + 1, labels_.end()}; }
  const std::vector<std::string>& labels() const { return labels_; }

  static ClassRegistry from_labels(const std::vector<std::string>& labels) {
    require(!labels.empty() && labels.front() == kNullLabel, "registry must start with the null class");
    ClassRegistry r;
    for (std::size_t i = 1; i < labels.size(); ++i) {
      const int idx = r.add(labels[i]);
      require(idx == static_cast<int>(i), "duplicate registry label '" + labels[i] + "'");
    }
    return r;
  }

  friend bool operator==(const ClassRegistry&, const ClassRegistry&) = default;

 private:
  std::vector<std::string> labels_;
};

struct ModelConfig {
  int input_dim = 0;
  std::vector<int> edge_widths{64, 64};
  std::vector<int> head_widths{32};
  int k = 5;
  std::uint64_t seed = 0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Dynamic graph CNN: EdgeConv layers (kNN recomputed on each layer's input,
/// edge feature [x_i, x_j - x_i], linear + ReLU, max over neighbors), a global
/// max pool over nodes, and an MLP head producing logits over the registry.
///
/// All parameters live in one flat vector so optimizers and checkpoints can
/// treat them uniformly. Each linear block is stored as a row-major out x in
/// weight matrix followed by its bias.
template <typename T>
class EdgeConvModel {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using VectorMap = Eigen::Map<Vector>;
  using ConstVectorMap = Eigen::Map<const Vector>;

  struct Block {
    int in = 0;
    int out = 0;
    std::size_t offset = 0;  // weights at offset, bias at offset + in*out
    std::size_t size() const { return static_cast<std::size_t>(in) * out + static_cast<std::size_t>(out); }
  };

  EdgeConvModel() = default;

  EdgeConvModel(const ModelConfig& config, ClassRegistry registry) : config_(config), registry_(std::move(registry)) {
    require(config.input_dim >= 1, "model input dim must be positive");
    require(config.k >= 1, "model k must be positive");
    require(!config.edge_widths.empty(), "model needs at least one EdgeConv layer");
    layout();
    initialize(config.seed);
  }

  const ModelConfig& config() const { return config_; }
  const ClassRegistry& registry() const { return registry_; }
  int num_outputs() const { return registry_.size(); }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<T> parameters() { return params_; }
  std::span<const T> parameters() const { return params_; }
  const std::vector<Block>& edge_blocks() const { return edge_; }
  const std::vector<Block>& head_blocks() const { return head_; }

  /// Grows the output layer for labels added to the registry since creation.
  /// Existing parameters are kept; new output rows get fresh initialization.
  void extend_registry(const ClassRegistry& registry, std::uint64_t seed) {
    for (int i = 0; i < registry_.size(); ++i)
      require(registry.size() > i && registry.label(i) == registry_.label(i), "registry extension must keep existing labels");
    if (registry.size() == registry_.size()) return;
    const EdgeConvModel old = *this;
    registry_ = registry;
    layout();
    initialize(seed);
    // Copy everything but the last block, then the overlapping rows of the last block.
    const auto& last_old = old.head_.back();
    std::copy(old.params_.begin(), old.params_.begin() + static_cast<std::ptrdiff_t>(last_old.offset), params_.begin());
    const auto& last = head_.back();
    for (int r = 0; r < last_old.out; ++r) {
      for (int c = 0; c < last.in; ++c)
        params_[last.offset + static_cast<std::size_t>(r) * last.in + c] =
            old.params_[last_old.offset + static_cast<std::size_t>(r) * last_old.in + c];
      params_[last.offset + static_cast<std::size_t>(last.in) * last.out + r] =
          old.params_[last_old.offset + static_cast<std::size_t>(last_old.in) * last_old.out + r];
    }
  }

  void set_parameters(std::span<const T> values) {
    require(values.size() == params_.size(), "parameter count mismatch");
    std::copy(values.begin(), values.end(), params_.begin());
  }

  template <typename U>
  EdgeConvModel<U> cast() const {
    EdgeConvModel<U> m(config_, registry_);
    std::vector<U> p(params_.begin(), params_.end());
    m.set_parameters(p);
    return m;
  }

  /// Intermediate values kept for the backward pass.
  struct Trace {
    struct EdgeLayer {
      Matrix input;                // N x in
      std::vector<int> neighbors;  // N x k_eff
      int k_eff = 0;
      Matrix pre;                  // (N*k_eff) x out, edge pre-activations
      std::vector<int> argmax;     // N x out, neighbor slot chosen by the max
    };
    std::vector<EdgeLayer> layers;
    Matrix node_out;                // N x last width
    std::vector<int> pool_argmax;   // per channel
    std::vector<Vector> head_in;    // input of each head block
    std::vector<Vector> head_pre;   // pre-activation of each head block
    Vector logits;
  };

  Vector forward(const ObjectGraph& g, Trace* trace = nullptr) const {
    require(g.dim == config_.input_dim, "graph node dim " + std::to_string(g.dim) + " differs from model input dim " +
                                            std::to_string(config_.input_dim));
    require(g.num_nodes >= 1, "graph has no nodes");
    const int n = g.num_nodes;
    Matrix x(n, g.dim);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < g.dim; ++c) x(i, c) = static_cast<T>(g.nodes[static_cast<std::size_t>(i) * g.dim + c]);

    Trace local;
    Trace& t = trace ? *trace : local;
    t.layers.clear();
    t.head_in.clear();
    t.head_pre.clear();
    for (const auto& blk : edge_) {
      typename Trace::EdgeLayer L;
      L.input = x;
      L.k_eff = std::min(config_.k, std::max(n - 1, 1));
      if (n == 1) {
        L.neighbors = {0};  // lone node: self edge, x_j - x_i = 0
      } else {
        L.neighbors = knn_edges<T>(std::span<const T>(x.data(), static_cast<std::size_t>(x.size())), n, blk.in / 2, L.k_eff);
      }
      const int in = blk.in / 2;
      ConstMatrixMap w(params_.data() + blk.offset, blk.out, blk.in);
      ConstVectorMap b(params_.data() + blk.offset + static_cast<std::size_t>(blk.in) * blk.out, blk.out);
      const Matrix self_w = w.leftCols(in) - w.rightCols(in);  // acts on x_i
      const Matrix nbr_w = w.rightCols(in);                     // acts on x_j
      const Matrix a = x * self_w.transpose();
      const Matrix bb = x * nbr_w.transpose();
      L.pre.resize(static_cast<Eigen::Index>(n) * L.k_eff, blk.out);
      L.argmax.assign(static_cast<std::size_t>(n) * blk.out, 0);
      Matrix y(n, blk.out);
      for (int i = 0; i < n; ++i) {
        for (int s = 0; s < L.k_eff; ++s) {
          const int j = L.neighbors[static_cast<std::size_t>(i) * L.k_eff + s];
          L.pre.row(static_cast<Eigen::Index>(i) * L.k_eff + s) = a.row(i) + bb.row(j) + b.transpose();
        }
        for (int c = 0; c < blk.out; ++c) {
          int best = 0;
          T best_v = L.pre(static_cast<Eigen::Index>(i) * L.k_eff, c);
          for (int s = 1; s < L.k_eff; ++s) {
            const T v = L.pre(static_cast<Eigen::Index>(i) * L.k_eff + s, c);
            if (v > best_v) {
              best_v = v;
              best = s;
            }
          }
          L.argmax[static_cast<std::size_t>(i) * blk.out + c] = best;
          y(i, c) = std::max(best_v, T(0));  // max of ReLU == ReLU of max
        }
      }
      t.layers.push_back(std::move(L));
      x = std::move(y);
    }
    t.node_out = x;
    Vector h(x.cols());
    t.pool_argmax.assign(static_cast<std::size_t>(x.cols()), 0);
    for (int c = 0; c < x.cols(); ++c) {
      Eigen::Index r;
      h(c) = x.col(c).maxCoeff(&r);
      t.pool_argmax[static_cast<std::size_t>(c)] = static_cast<int>(r);
    }
    for (std::size_t l = 0; l < head_.size(); ++l) {
      const auto& blk = head_[l];
      ConstMatrixMap w(params_.data() + blk.offset, blk.out, blk.in);
      ConstVectorMap b(params_.data() + blk.offset + static_cast<std::size_t>(blk.in) * blk.out, blk.out);
      t.head_in.push_back(h);
      Vector pre = w * h + b;
      t.head_pre.push_back(pre);
      h = (l + 1 < head_.size()) ? Vector(pre.cwiseMax(T(0))) : pre;
    }
    t.logits = h;
    return h;
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logits).
  void backward(const Trace& t, const Vector& dlogits, std::span<T> grad) const {
    require(grad.size() == params_.size(), "gradient buffer size mismatch");
    Vector dh = dlogits;
    for (std::size_t l = head_.size(); l-- > 0;) {
      const auto& blk = head_[l];
      Vector dpre = dh;
      if (l + 1 < head_.size())
        for (int c = 0; c < blk.out; ++c)
          if (!(t.head_pre[l](c) > T(0))) dpre(c) = T(0);
      MatrixMap gw(grad.data() + blk.offset, blk.out, blk.in);
      VectorMap gb(grad.data() + blk.offset + static_cast<std::size_t>(blk.in) * blk.out, blk.out);
      gw.noalias() += dpre * t.head_in[l].transpose();
      gb += dpre;
      ConstMatrixMap w(params_.data() + blk.offset, blk.out, blk.in);
      dh = w.transpose() * dpre;
    }
    Matrix dx = Matrix::Zero(t.node_out.rows(), t.node_out.cols());
    for (int c = 0; c < dx.cols(); ++c) dx(t.pool_argmax[static_cast<std::size_t>(c)], c) = dh(c);

    for (std::size_t l = edge_.size(); l-- > 0;) {
      const auto& blk = edge_[l];
      const auto& L = t.layers[l];
      const int n = static_cast<int>(L.input.rows());
      const int in = blk.in / 2;
      Matrix da = Matrix::Zero(n, blk.out);
      Matrix db = Matrix::Zero(n, blk.out);
      VectorMap gb(grad.data() + blk.offset + static_cast<std::size_t>(blk.in) * blk.out, blk.out);
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c < blk.out; ++c) {
          const int s = L.argmax[static_cast<std::size_t>(i) * blk.out + c];
          if (!(L.pre(static_cast<Eigen::Index>(i) * L.k_eff + s, c) > T(0))) continue;
          const T g = dx(i, c);
          const int j = L.neighbors[static_cast<std::size_t>(i) * L.k_eff + s];
          da(i, c) += g;
          db(j, c) += g;
          gb(c) += g;
        }
      }
      ConstMatrixMap w(params_.data() + blk.offset, blk.out, blk.in);
      const Matrix self_w = w.leftCols(in) - w.rightCols(in);
      const Matrix nbr_w = w.rightCols(in);
      const Matrix g_self = da.transpose() * L.input;  // d/d(self_w)
      const Matrix g_nbr = db.transpose() * L.input;   // d/d(nbr_w)
      MatrixMap gw(grad.data() + blk.offset, blk.out, blk.in);
      gw.leftCols(in) += g_self;
      gw.rightCols(in) += g_nbr - g_self;
      dx = da * self_w + db * nbr_w;
    }
  }

  /// Mean softmax cross-entropy over a batch, with its parameter gradient.
  T loss_and_grad(std::span<const ObjectGraph> batch, std::span<const int> labels, std::vector<T>* grad,
                  std::vector<Vector>* logits_out = nullptr) const {
    require(!batch.empty(), "empty training batch");
    require(batch.size() == labels.size(), "batch and label counts differ");
    if (grad) grad->assign(params_.size(), T(0));
    if (logits_out) logits_out->clear();
    T loss = 0;
    const T scale = T(1) / static_cast<T>(batch.size());
    Trace tr;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const int y = labels[b];
      if (y < 0 || y >= num_outputs()) fail(ErrorKind::kInvalidArgument, "label " + std::to_string(y) + " outside registry");
      Vector z = forward(batch[b], &tr);
      const T m = z.maxCoeff();
      Vector p = (z.array() - m).exp();
      const T denom = p.sum();
      p /= denom;
      loss += (std::log(denom) + m - z(y)) * scale;
      if (grad) {
        Vector dz = p * scale;
        dz(y) -= scale;
        backward(tr, dz, *grad);
      }
      if (logits_out) logits_out->push_back(std::move(z));
    }
    return loss;
  }

 private:
  void layout() {
    edge_.clear();
    head_.clear();
    std::size_t offset = 0;
    int width = config_.input_dim;
    for (int w : config_.edge_widths) {
      require(w >= 1, "layer width must be positive");
      edge_.push_back({2 * width, w, offset});
      offset += edge_.back().size();
      width = w;
    }
    for (int w : config_.head_widths) {
      require(w >= 1, "layer width must be positive");
      head_.push_back({width, w, offset});
      offset += head_.back().size();
      width = w;
    }
    head_.push_back({width, registry_.size(), offset});
    offset += head_.back().size();
    params_.assign(offset, T(0));
  }

  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    auto init = [&](const Block& b) {
      const double limit = std::sqrt(6.0 / (b.in + b.out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (std::size_t i = 0; i < static_cast<std::size_t>(b.in) * b.out; ++i) params_[b.offset + i] = static_cast<T>(u(rng));
      for (int i = 0; i < b.out; ++i) params_[b.offset + static_cast<std::size_t>(b.in) * b.out + i] = T(0);
    };
    for (const auto& b : edge_) init(b);
    for (const auto& b : head_) init(b);
  }

  ModelConfig config_;
  ClassRegistry registry_;
  std::vector<Block> edge_;
  std::vector<Block> head_;
  std::vector<T> params_;
};

template <typename T>
std::vector<double> softmax(const typename EdgeConvModel<T>::Vector& z) {
  const double m = static_cast<double>(z.maxCoeff());
  std::vector<double> p(static_cast<std::size_t>(z.size()));
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) s += p[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(z(i)) - m);
  for (double& v : p) v /= s;
  return p;
}

}  // namespace vlfuse::insitu

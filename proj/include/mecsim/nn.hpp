#pragma once

// Small differentiable-function toolkit: dense and 1-D convolution layers,
// named linear heads, reverse-mode gradients, Adam, and a portable JSON
// parameter format. Batches are rows of row-major matrices.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace mecsim::nn {

template <class T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mat = MatT<double>;
using MatF = MatT<float>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

class NnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation { Identity, Relu, Tanh };

NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::Identity, "identity"},
                                          {Activation::Relu, "relu"},
                                          {Activation::Tanh, "tanh"}})

struct DenseSpec {
  int in = 0;
  int out = 0;
  Activation act = Activation::Relu;
  bool operator==(const DenseSpec&) const = default;
};

// Convolution along a length axis (the user axis for centralized agents).
// Input rows hold `length` consecutive blocks of `channels_in` features;
// zero padding keeps the output length equal to the input length.
struct Conv1dSpec {
  int length = 0;
  int channels_in = 0;
  int channels_out = 0;
  int kernel = 1;
  Activation act = Activation::Relu;
  bool operator==(const Conv1dSpec&) const = default;
};

using LayerSpec = std::variant<DenseSpec, Conv1dSpec>;

// Linear read-out from the trunk output.
struct HeadSpec {
  std::string name;
  int width = 1;
  double init_scale = 1.0;
  bool operator==(const HeadSpec&) const = default;
};

struct NetworkSpec {
  int input_dim = 0;
  std::vector<LayerSpec> layers;
  std::vector<HeadSpec> heads;
  bool operator==(const NetworkSpec&) const = default;
};

inline int layer_in(const LayerSpec& l) {
  return std::visit(
      [](const auto& s) -> int {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, DenseSpec>)
          return s.in;
        else
          return s.length * s.channels_in;
      },
      l);
}

inline int layer_out(const LayerSpec& l) {
  return std::visit(
      [](const auto& s) -> int {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, DenseSpec>)
          return s.out;
        else
          return s.length * s.channels_out;
      },
      l);
}

inline void check_spec(const NetworkSpec& spec) {
  int width = spec.input_dim;
  if (width <= 0) throw NnError("network input_dim must be positive");
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (layer_in(spec.layers[i]) != width)
      throw NnError("layer " + std::to_string(i) + " expects width " +
                    std::to_string(layer_in(spec.layers[i])) + ", got " +
                    std::to_string(width));
    if (const auto* c = std::get_if<Conv1dSpec>(&spec.layers[i])) {
      if (c->kernel < 1 || c->kernel % 2 == 0)
        throw NnError("conv1d kernel must be a positive odd integer");
    }
    width = layer_out(spec.layers[i]);
    if (width <= 0) throw NnError("layer widths must be positive");
  }
  if (spec.heads.empty()) throw NnError("network needs at least one head");
  for (const auto& h : spec.heads)
    if (h.width <= 0) throw NnError("head " + h.name + " must have positive width");
}

template <class T>
struct BasicParamTensor {
  std::string name;
  MatT<T> value;
  MatT<T> grad;

  std::vector<int> shape() const {
    return {static_cast<int>(value.rows()), static_cast<int>(value.cols())};
  }
};

using ParamTensor = BasicParamTensor<double>;

template <class T>
void apply_activation(Activation act, MatT<T>& m) {
  switch (act) {
    case Activation::Identity: break;
    case Activation::Relu: m = m.cwiseMax(T(0)); break;
    case Activation::Tanh: m = m.array().tanh().matrix(); break;
  }
}

// Gradient through the activation given its output.
template <class T>
void activation_backward(Activation act, const MatT<T>& out, MatT<T>& grad) {
  switch (act) {
    case Activation::Identity: break;
    case Activation::Relu:
      grad = (out.array() > T(0)).select(grad, T(0));
      break;
    case Activation::Tanh:
      grad = grad.cwiseProduct((T(1) - out.array().square()).matrix());
      break;
  }
}

template <class T>
struct BasicOutputs {
  std::vector<std::string> names;
  std::vector<MatT<T>> values;
  MatT<T> trunk;  // last hidden representation

  const MatT<T>& operator[](std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return values[i];
    throw NnError("no head named " + std::string(name));
  }
};

template <class T>
class BasicNetwork {
 public:
  using M = MatT<T>;
  using CMap = Eigen::Map<const M>;
  using Param = BasicParamTensor<T>;
  using Out = BasicOutputs<T>;

  BasicNetwork() = default;

  BasicNetwork(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    check_spec(spec_);
    std::mt19937_64 rng(seed);
    auto init = [&](const std::string& name, int fan_in, int fan_out, double scale) {
      const double a = scale * std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> d(-a, a);
      Param w{name + ".w", M(fan_in, fan_out), M::Zero(fan_in, fan_out)};
      for (Eigen::Index i = 0; i < w.value.size(); ++i) w.value.data()[i] = static_cast<T>(d(rng));
      params_.push_back(std::move(w));
      params_.push_back({name + ".b", M::Zero(1, fan_out), M::Zero(1, fan_out)});
    };
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const std::string name = "layer" + std::to_string(i);
      if (const auto* d = std::get_if<DenseSpec>(&spec_.layers[i]))
        init(name, d->in, d->out, 1.0);
      else {
        const auto& c = std::get<Conv1dSpec>(spec_.layers[i]);
        init(name, c.kernel * c.channels_in, c.channels_out, 1.0);
      }
    }
    const int trunk = trunk_width();
    for (const auto& h : spec_.heads) init("head." + h.name, trunk, h.width, h.init_scale);
  }

  const NetworkSpec& spec() const { return spec_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  int trunk_width() const {
    return spec_.layers.empty() ? spec_.input_dim : layer_out(spec_.layers.back());
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  // Forward pass that keeps the activations needed by backward().
  Out forward(const M& x) { return run(x, &acts_); }

  // Forward pass without touching the cache; safe on shared read-only nets.
  Out infer(const M& x) const {
    std::vector<M> scratch;
    return run(x, &scratch);
  }

  // Trunk output of the last forward() call.
  const M& trunk_output() const { return acts_.back(); }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  // Accumulates parameter gradients given d(loss)/d(head output) for each
  // head, in head order. An empty matrix stands for a zero gradient.
  void backward(const std::vector<M>& head_grads) {
    if (acts_.empty()) throw NnError("backward called before forward");
    if (head_grads.size() != spec_.heads.size())
      throw NnError("backward expects one gradient per head");
    const M& trunk = acts_.back();
    const Eigen::Index batch = trunk.rows();
    M d_trunk = M::Zero(batch, trunk.cols());
    const std::size_t head0 = 2 * spec_.layers.size();
    for (std::size_t h = 0; h < spec_.heads.size(); ++h) {
      const M& g = head_grads[h];
      if (g.size() == 0) continue;
      if (g.rows() != batch || g.cols() != spec_.heads[h].width)
        throw NnError("gradient shape mismatch for head " + spec_.heads[h].name);
      auto& w = params_[head0 + 2 * h];
      auto& b = params_[head0 + 2 * h + 1];
      w.grad.noalias() += trunk.transpose() * g;
      b.grad += g.colwise().sum();
      d_trunk.noalias() += g * w.value.transpose();
    }
    for (std::size_t i = spec_.layers.size(); i-- > 0;) {
      auto& w = params_[2 * i];
      auto& b = params_[2 * i + 1];
      const M& in = acts_[i];
      const M& out = acts_[i + 1];
      if (const auto* d = std::get_if<DenseSpec>(&spec_.layers[i])) {
        activation_backward(d->act, out, d_trunk);
        w.grad.noalias() += in.transpose() * d_trunk;
        b.grad += d_trunk.colwise().sum();
        if (i > 0) d_trunk = d_trunk * w.value.transpose();
      } else {
        const auto& c = std::get<Conv1dSpec>(spec_.layers[i]);
        activation_backward(c.act, out, d_trunk);
        const CMap dy(d_trunk.data(), batch * c.length, c.channels_out);
        const M cols = im2col(in, c);
        w.grad.noalias() += cols.transpose() * dy;
        b.grad += dy.colwise().sum();
        if (i > 0) {
          const M dcols = dy * w.value.transpose();
          d_trunk = col2im(dcols, c, batch);
        }
      }
    }
  }

  double grad_norm() const {
    double s = 0;
    for (const auto& p : params_) s += static_cast<double>(p.grad.squaredNorm());
    return std::sqrt(s);
  }

  // Rescales gradients so their global norm is at most max_norm (if > 0).
  void clip_grad_norm(double max_norm) {
    if (!(max_norm > 0)) return;
    const double n = grad_norm();
    if (n > max_norm) {
      const T f = static_cast<T>(max_norm / n);
      for (auto& p : params_) p.grad *= f;
    }
  }

 private:
  static M im2col(const M& in, const Conv1dSpec& c) {
    const Eigen::Index batch = in.rows();
    if (c.kernel == 1) return CMap(in.data(), batch * c.length, c.channels_in);
    const int half = c.kernel / 2;
    M cols = M::Zero(batch * c.length, c.kernel * c.channels_in);
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (int l = 0; l < c.length; ++l) {
        for (int o = 0; o < c.kernel; ++o) {
          const int src = l + o - half;
          if (src < 0 || src >= c.length) continue;
          cols.block(b * c.length + l, o * c.channels_in, 1, c.channels_in) =
              in.block(b, src * c.channels_in, 1, c.channels_in);
        }
      }
    }
    return cols;
  }

  static M col2im(const M& dcols, const Conv1dSpec& c, Eigen::Index batch) {
    if (c.kernel == 1) return CMap(dcols.data(), batch, c.length * c.channels_in);
    const int half = c.kernel / 2;
    M dx = M::Zero(batch, c.length * c.channels_in);
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (int l = 0; l < c.length; ++l) {
        for (int o = 0; o < c.kernel; ++o) {
          const int src = l + o - half;
          if (src < 0 || src >= c.length) continue;
          dx.block(b, src * c.channels_in, 1, c.channels_in) +=
              dcols.block(b * c.length + l, o * c.channels_in, 1, c.channels_in);
        }
      }
    }
    return dx;
  }

  Out run(const M& x, std::vector<M>* cache) const {
    if (x.cols() != spec_.input_dim)
      throw NnError("input has " + std::to_string(x.cols()) + " features, expected " +
                    std::to_string(spec_.input_dim));
    std::vector<M>& acts = *cache;
    acts.clear();
    acts.push_back(x);
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const auto& w = params_[2 * i].value;
      const auto& b = params_[2 * i + 1].value;
      const M& in = acts.back();
      M out;
      if (const auto* d = std::get_if<DenseSpec>(&spec_.layers[i])) {
        out.noalias() = in * w;
        out.rowwise() += b.row(0);
        apply_activation(d->act, out);
      } else {
        const auto& c = std::get<Conv1dSpec>(spec_.layers[i]);
        M y = im2col(in, c) * w;
        y.rowwise() += b.row(0);
        apply_activation(c.act, y);
        out = CMap(y.data(), in.rows(), c.length * c.channels_out);
      }
      acts.push_back(std::move(out));
    }
    Out o;
    const M& trunk = acts.back();
    const std::size_t head0 = 2 * spec_.layers.size();
    for (std::size_t h = 0; h < spec_.heads.size(); ++h) {
      M y = trunk * params_[head0 + 2 * h].value;
      y.rowwise() += params_[head0 + 2 * h + 1].value.row(0);
      o.names.push_back(spec_.heads[h].name);
      o.values.push_back(std::move(y));
    }
    o.trunk = trunk;
    return o;
  }

  NetworkSpec spec_;
  std::vector<Param> params_;
  std::vector<M> acts_;
};

using Network = BasicNetwork<double>;
using Outputs = BasicOutputs<double>;

class NonFiniteError : public NnError {
 public:
  using NnError::NnError;
};

// Bias-corrected Adam.
template <class T>
class BasicAdam {
 public:
  explicit BasicAdam(double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return t_; }

  void step(std::vector<BasicParamTensor<T>>& params) {
    for (const auto& p : params) {
      if (!p.grad.allFinite()) throw NonFiniteError("non-finite gradient in parameter " + p.name);
    }
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (const auto& p : params) {
        m_.push_back(MatT<T>::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(MatT<T>::Zero(p.value.rows(), p.value.cols()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
      m_[i] = b1 * m_[i] + (T(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= static_cast<T>(lr_) * (m_[i].array() / static_cast<T>(c1)) /
                         ((v_[i].array() / static_cast<T>(c2)).sqrt() + static_cast<T>(eps_));
      if (!p.value.allFinite()) throw NonFiniteError("non-finite value in parameter " + p.name);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<MatT<T>> m_, v_;
};

using Adam = BasicAdam<double>;

struct SoftmaxEntropy {
  std::vector<double> probs;
  double entropy = 0.0;
};

// Max-subtracted softmax of one logit vector and the entropy of the result.
inline SoftmaxEntropy softmax_entropy(std::span<const double> logits) {
  SoftmaxEntropy r;
  if (logits.empty()) return r;
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) mx = std::max(mx, z);
  double sum = 0;
  r.probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.probs[i] = std::exp(logits[i] - mx);
    sum += r.probs[i];
  }
  const double log_sum = std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.probs[i] /= sum;
    const double logp = logits[i] - mx - log_sum;
    if (r.probs[i] > 0) r.entropy -= r.probs[i] * logp;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Serialization. Values are written with round-trip precision, so a
// save/load cycle is bit-exact for double and float networks alike.

inline nlohmann::json to_json(const NetworkSpec& s) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : s.layers) {
    if (const auto* d = std::get_if<DenseSpec>(&l))
      layers.push_back({{"type", "dense"}, {"in", d->in}, {"out", d->out}, {"act", d->act}});
    else {
      const auto& c = std::get<Conv1dSpec>(l);
      layers.push_back({{"type", "conv1d"},
                        {"length", c.length},
                        {"channels_in", c.channels_in},
                        {"channels_out", c.channels_out},
                        {"kernel", c.kernel},
                        {"act", c.act}});
    }
  }
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& h : s.heads)
    heads.push_back({{"name", h.name}, {"width", h.width}, {"init_scale", h.init_scale}});
  return {{"input_dim", s.input_dim}, {"layers", layers}, {"heads", heads}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.input_dim = j.at("input_dim").get<int>();
  for (const auto& l : j.at("layers")) {
    const auto type = l.at("type").get<std::string>();
    if (type == "dense") {
      s.layers.push_back(DenseSpec{l.at("in").get<int>(), l.at("out").get<int>(),
                                   l.at("act").get<Activation>()});
    } else if (type == "conv1d") {
      s.layers.push_back(Conv1dSpec{l.at("length").get<int>(), l.at("channels_in").get<int>(),
                                    l.at("channels_out").get<int>(), l.at("kernel").get<int>(),
                                    l.at("act").get<Activation>()});
    } else {
      throw NnError("unknown layer type " + type);
    }
  }
  for (const auto& h : j.at("heads"))
    s.heads.push_back({h.at("name").get<std::string>(), h.at("width").get<int>(),
                       h.value("init_scale", 1.0)});
  return s;
}

template <class T>
nlohmann::json to_json(const BasicNetwork<T>& net) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : net.params()) {
    std::vector<double> values(p.value.data(), p.value.data() + p.value.size());
    params.push_back({{"name", p.name}, {"shape", p.shape()}, {"values", values}});
  }
  return {{"spec", to_json(net.spec())}, {"params", params}};
}

template <class T = double>
BasicNetwork<T> network_from_json(const nlohmann::json& j) {
  BasicNetwork<T> net(spec_from_json(j.at("spec")), 0);
  auto& params = net.params();
  const auto& jp = j.at("params");
  if (jp.size() != params.size()) throw NnError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto shape = jp[i].at("shape").get<std::vector<int>>();
    const auto values = jp[i].at("values").get<std::vector<double>>();
    if (jp[i].at("name").get<std::string>() != params[i].name ||
        shape != params[i].shape() ||
        values.size() != static_cast<std::size_t>(params[i].value.size()))
      throw NnError("checkpoint parameter " + params[i].name + " does not match spec");
    for (std::size_t v = 0; v < values.size(); ++v)
      params[i].value.data()[v] = static_cast<T>(values[v]);
  }
  return net;
}

}  // namespace mecsim::nn

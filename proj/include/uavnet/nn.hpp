#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace uavnet::nn {

enum class Activation { tanh, identity };

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
struct Layer {
  Mat<T> W;  // out x in
  Vec<T> b;
};

template <class T>
class Mlp;

/// Post-activation values of one forward pass; samples are columns.
template <class T>
struct ForwardCache {
  std::vector<Mat<T>> acts;  // acts[0] is the input, acts.back() the output
  const Mlp<T>* owner = nullptr;
  std::uint64_t generation = 0;
};

template <class T>
struct Grads {
  std::vector<Layer<T>> layers;
  Mat<T> dx;  // gradient with respect to the input batch
};

/// Fully connected network, tanh on hidden layers. Every parameter change
/// goes through a member that bumps the generation so caches taken before it
/// are rejected by backward().
template <class T>
class Mlp {
 public:
  Mlp() = default;

  /// All-zero parameters.
  Mlp(std::vector<int> dims, Activation output) : dims_(std::move(dims)), output_(output) {
    if (dims_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    for (int d : dims_)
      if (d < 1) throw std::invalid_argument("Mlp: layer sizes must be >= 1");
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l)
      layers_.push_back({Mat<T>::Zero(dims_[l + 1], dims_[l]), Vec<T>::Zero(dims_[l + 1])});
  }

  /// Weights and biases uniform in +-1/sqrt(fan_in).
  template <class Rng>
  Mlp(std::vector<int> dims, Activation output, Rng& rng) : Mlp(std::move(dims), output) {
    for (auto& layer : layers_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.W.cols()));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index i = 0; i < layer.W.size(); ++i) layer.W.data()[i] = static_cast<T>(u(rng));
      for (Eigen::Index i = 0; i < layer.b.size(); ++i) layer.b(i) = static_cast<T>(u(rng));
    }
  }

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  Activation output_activation() const { return output_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }
  std::uint64_t generation() const { return generation_; }

  Mat<T> forward(const Mat<T>& x) const {
    check_input(x);
    Mat<T> a = layer_out(0, x);
    for (std::size_t l = 1; l < layers_.size(); ++l) a = layer_out(l, a);
    return a;
  }

  Mat<T> forward(const Mat<T>& x, ForwardCache<T>& cache) const {
    check_input(x);
    cache.acts.resize(layers_.size() + 1);
    cache.acts[0] = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) cache.acts[l + 1] = layer_out(l, cache.acts[l]);
    cache.owner = this;
    cache.generation = generation_;
    return cache.acts.back();
  }

  /// Output layer before its activation, recomputed from a forward cache.
  Mat<T> pre_output(const ForwardCache<T>& cache) const {
    check_cache(cache);
    const auto& last = layers_.back();
    Mat<T> z(last.W.rows(), cache.acts.back().cols());
    z.noalias() = last.W * cache.acts[layers_.size() - 1];
    z.colwise() += last.b;
    return z;
  }

  /// Gradients of sum(y .* dy) with respect to every parameter and the input.
  /// Either part can be skipped when the caller does not need it. dz, if
  /// given, is an extra gradient on the output layer's pre-activation.
  Grads<T> backward(const ForwardCache<T>& cache, const Mat<T>& dy, bool param_grads = true,
                    bool input_grad = true, const Mat<T>* dz = nullptr) const {
    check_cache(cache);
    if (dy.rows() != output_dim() || dy.cols() != cache.acts.back().cols())
      throw std::invalid_argument("Mlp::backward: dy has the wrong shape");
    if (dz && (dz->rows() != dy.rows() || dz->cols() != dy.cols()))
      throw std::invalid_argument("Mlp::backward: dz has the wrong shape");

    Grads<T> g;
    if (param_grads) g.layers.resize(layers_.size());
    Mat<T> delta = dy;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Mat<T>& out = cache.acts[l + 1];
      if (l + 1 < layers_.size() || output_ == Activation::tanh)
        delta.array() *= (T(1) - out.array().square());
      if (dz && l + 1 == layers_.size()) delta += *dz;
      if (param_grads) {
        g.layers[l].W.noalias() = delta * cache.acts[l].transpose();
        g.layers[l].b = delta.rowwise().sum();
      }
      if (l == 0 && !input_grad) break;
      Mat<T> prev(layers_[l].W.cols(), delta.cols());
      prev.noalias() = layers_[l].W.transpose() * delta;
      delta = std::move(prev);
      if (l == 0) g.dx = std::move(delta);
    }
    return g;
  }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.W.size() + layer.b.size());
    return n;
  }

  /// Layer by layer: W in column-major order, then b.
  std::vector<T> flat_params() const {
    std::vector<T> out;
    out.reserve(num_params());
    for (const auto& layer : layers_) {
      out.insert(out.end(), layer.W.data(), layer.W.data() + layer.W.size());
      out.insert(out.end(), layer.b.data(), layer.b.data() + layer.b.size());
    }
    return out;
  }

  void set_flat_params(const std::vector<T>& p) {
    if (p.size() != num_params()) throw std::invalid_argument("Mlp::set_flat_params: size mismatch");
    std::size_t at = 0;
    for (auto& layer : layers_) {
      std::copy_n(p.data() + at, layer.W.size(), layer.W.data());
      at += static_cast<std::size_t>(layer.W.size());
      std::copy_n(p.data() + at, layer.b.size(), layer.b.data());
      at += static_cast<std::size_t>(layer.b.size());
    }
    ++generation_;
  }

  /// Mutable access for optimizers; bumps the generation.
  std::vector<Layer<T>>& mutable_layers() {
    ++generation_;
    return layers_;
  }

  template <class U>
  Mlp<U> cast() const {
    Mlp<U> out(dims_, output_);
    auto& dst = out.mutable_layers();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      dst[l].W = layers_[l].W.template cast<U>();
      dst[l].b = layers_[l].b.template cast<U>();
    }
    return out;
  }

  bool same_shape(const Mlp& other) const { return dims_ == other.dims_ && output_ == other.output_; }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l)
      if (a.layers_[l].W != b.layers_[l].W || a.layers_[l].b != b.layers_[l].b) return false;
    return true;
  }

 private:
  void check_cache(const ForwardCache<T>& cache) const {
    if (cache.owner != this || cache.generation != generation_ || cache.acts.size() != layers_.size() + 1)
      throw std::logic_error("Mlp::backward: stale or foreign forward cache");
  }

  void check_input(const Mat<T>& x) const {
    if (layers_.empty()) throw std::logic_error("Mlp: empty network");
    if (x.rows() != input_dim())
      throw std::invalid_argument("Mlp::forward: expected input dimension " + std::to_string(input_dim()) + ", got " +
                                  std::to_string(x.rows()));
  }

  Mat<T> layer_out(std::size_t l, const Mat<T>& a) const {
    Mat<T> z(layers_[l].W.rows(), a.cols());
    z.noalias() = layers_[l].W * a;
    z.colwise() += layers_[l].b;
    if (l + 1 < layers_.size() || output_ == Activation::tanh) z.array() = z.array().tanh();
    return z;
  }

  std::vector<int> dims_;
  Activation output_ = Activation::identity;
  std::vector<Layer<T>> layers_;
  std::uint64_t generation_ = 0;
};

/// Adam state. Moments have the shape of the parameters.
template <class T>
struct OptState {
  std::vector<Layer<T>> m;
  std::vector<Layer<T>> v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
OptState<T> make_opt_state(const Mlp<T>& net, double lr) {
  OptState<T> s;
  s.lr = lr;
  for (const auto& layer : net.layers()) {
    s.m.push_back({Mat<T>::Zero(layer.W.rows(), layer.W.cols()), Vec<T>::Zero(layer.b.size())});
    s.v.push_back(s.m.back());
  }
  return s;
}

/// One Adam descent step along `grads`.
template <class T>
void opt_step(Mlp<T>& net, const Grads<T>& grads, OptState<T>& s) {
  if (grads.layers.size() != net.layers().size() || s.m.size() != net.layers().size())
    throw std::invalid_argument("opt_step: shape mismatch");
  ++s.step;
  const T b1 = static_cast<T>(s.beta1);
  const T b2 = static_cast<T>(s.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(s.beta1, static_cast<double>(s.step)));
  const T c2 = static_cast<T>(1.0 - std::pow(s.beta2, static_cast<double>(s.step)));
  const T lr = static_cast<T>(s.lr);
  const T eps = static_cast<T>(s.eps);

  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    if (p.rows() != g.rows() || p.cols() != g.cols()) throw std::invalid_argument("opt_step: gradient shape mismatch");
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  auto& layers = net.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].W, s.m[l].W, s.v[l].W, grads.layers[l].W);
    update(layers[l].b, s.m[l].b, s.v[l].b, grads.layers[l].b);
  }
}

/// target = tau * online + (1 - tau) * target
template <class T>
void soft_update(Mlp<T>& target, const Mlp<T>& online, double tau) {
  if (!target.same_shape(online)) throw std::invalid_argument("soft_update: architectures differ");
  const T t = static_cast<T>(tau);
  auto& dst = target.mutable_layers();
  const auto& src = online.layers();
  for (std::size_t l = 0; l < dst.size(); ++l) {
    dst[l].W = t * src[l].W + (T(1) - t) * dst[l].W;
    dst[l].b = t * src[l].b + (T(1) - t) * dst[l].b;
  }
}

template <class T>
nlohmann::json to_json(const Mlp<T>& net);
template <class T>
Mlp<T> mlp_from_json(const nlohmann::json& j);

template <class T>
void save_checkpoint(const Mlp<T>& net, const std::filesystem::path& path);
template <class T>
Mlp<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace uavnet::nn

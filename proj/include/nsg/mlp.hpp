#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nsg/rng.hpp"

namespace nsg {

/// Fully connected ReLU network, samples in rows. Layer l computes
/// A_{l+1} = relu(A_l W_l + 1 b_l^T); the last layer is linear.
template <typename Scalar>
struct Mlp {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<Matrix> weights;  // in x out
  std::vector<RowVector> biases;

  /// Activations of every layer from the last forward pass.
  struct Tape {
    std::vector<Matrix> activations;
  };

  Mlp() = default;

  /// He-uniform weights, zero biases.
  static Mlp init(const std::vector<int>& sizes, Rng& rng) {
    Mlp net = zeros(sizes);
    for (auto& w : net.weights) {
      const double bound = std::sqrt(6.0 / static_cast<double>(w.rows()));
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        w.data()[i] = static_cast<Scalar>((2.0 * rng.uniform01() - 1.0) * bound);
      }
    }
    return net;
  }

  static Mlp zeros(const std::vector<int>& sizes) {
    if (sizes.size() < 2) throw std::invalid_argument("mlp needs at least two layer sizes");
    Mlp net;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      net.weights.push_back(Matrix::Zero(sizes[l], sizes[l + 1]));
      net.biases.push_back(RowVector::Zero(sizes[l + 1]));
    }
    return net;
  }

  Mlp zeros_like() const {
    Mlp out = *this;
    out.set_zero();
    return out;
  }

  std::vector<int> sizes() const {
    std::vector<int> s;
    if (weights.empty()) return s;
    s.push_back(static_cast<int>(weights.front().rows()));
    for (const auto& w : weights) s.push_back(static_cast<int>(w.cols()));
    return s;
  }

  int input_dim() const { return static_cast<int>(weights.front().rows()); }
  int output_dim() const { return static_cast<int>(weights.back().cols()); }
  std::size_t layers() const { return weights.size(); }

  Matrix forward(const Matrix& x) const {
    Matrix a = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Matrix z = a * weights[l];
      z.rowwise() += biases[l];
      a = l + 1 < weights.size() ? Matrix(z.cwiseMax(Scalar(0))) : z;
    }
    return a;
  }

  Matrix forward(const Matrix& x, Tape& tape) const {
    tape.activations.assign(1, x);
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Matrix z = tape.activations.back() * weights[l];
      z.rowwise() += biases[l];
      if (l + 1 < weights.size()) z = z.cwiseMax(Scalar(0));
      tape.activations.push_back(std::move(z));
    }
    return tape.activations.back();
  }

  /// Gradient of sum(d_out .* output) with respect to every parameter.
  Mlp backward(const Tape& tape, const Matrix& d_out) const {
    Mlp grad;
    grad.weights.resize(weights.size());
    grad.biases.resize(biases.size());
    Matrix delta = d_out;
    for (std::size_t l = weights.size(); l-- > 0;) {
      const Matrix& a = tape.activations[l];
      grad.weights[l].noalias() = a.transpose() * delta;
      grad.biases[l] = delta.colwise().sum();
      if (l > 0) {
        Matrix back = delta * weights[l].transpose();
        delta = (a.array() > Scalar(0)).select(back, Scalar(0));
      }
    }
    return grad;
  }

  void set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
  }

  /// this += alpha * other
  Mlp& axpy(Scalar alpha, const Mlp& other) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += alpha * other.weights[l];
      biases[l] += alpha * other.biases[l];
    }
    return *this;
  }

  Mlp& scale(Scalar s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] *= s;
      biases[l] *= s;
    }
    return *this;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  Vector flatten() const {
    Vector out(parameter_count());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.segment(k, weights[l].size()) = Eigen::Map<const Vector>(weights[l].data(), weights[l].size());
      k += weights[l].size();
      out.segment(k, biases[l].size()) = biases[l].transpose();
      k += biases[l].size();
    }
    return out;
  }

  void unflatten(const Vector& flat) {
    if (flat.size() != parameter_count()) throw std::invalid_argument("parameter vector size mismatch");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Eigen::Map<Vector>(weights[l].data(), weights[l].size()) = flat.segment(k, weights[l].size());
      k += weights[l].size();
      biases[l] = flat.segment(k, biases[l].size()).transpose();
      k += biases[l].size();
    }
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  template <typename Other>
  Mlp<Other> cast() const {
    Mlp<Other> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.weights.push_back(weights[l].template cast<Other>());
      out.biases.push_back(biases[l].template cast<Other>());
    }
    return out;
  }

  bool operator==(const Mlp& other) const {
    if (weights.size() != other.weights.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
    }
    return true;
  }

  /// {"sizes": [...], "layers": [{"w": [[row]...], "b": [...]}...]}; values
  /// are written as doubles so a float net round-trips exactly.
  nlohmann::json to_json() const {
    nlohmann::json doc{{"sizes", sizes()}, {"layers", nlohmann::json::array()}};
    for (std::size_t l = 0; l < weights.size(); ++l) {
      nlohmann::json w = nlohmann::json::array();
      for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < weights[l].cols(); ++c) row.push_back(static_cast<double>(weights[l](r, c)));
        w.push_back(std::move(row));
      }
      nlohmann::json b = nlohmann::json::array();
      for (Eigen::Index c = 0; c < biases[l].size(); ++c) b.push_back(static_cast<double>(biases[l](c)));
      doc["layers"].push_back({{"w", std::move(w)}, {"b", std::move(b)}});
    }
    return doc;
  }

  static Mlp from_json(const nlohmann::json& doc) {
    Mlp net = zeros(doc.at("sizes").get<std::vector<int>>());
    const auto& layers = doc.at("layers");
    if (layers.size() != net.weights.size()) throw std::invalid_argument("layer count mismatch");
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      const auto& w = layers[l].at("w");
      const auto& b = layers[l].at("b");
      if (w.size() != static_cast<std::size_t>(net.weights[l].rows()) ||
          b.size() != static_cast<std::size_t>(net.biases[l].size())) {
        throw std::invalid_argument("layer shape mismatch");
      }
      for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r) {
        if (w[static_cast<std::size_t>(r)].size() != static_cast<std::size_t>(net.weights[l].cols())) {
          throw std::invalid_argument("layer shape mismatch");
        }
        for (Eigen::Index c = 0; c < net.weights[l].cols(); ++c) {
          net.weights[l](r, c) = static_cast<Scalar>(w[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>());
        }
      }
      for (Eigen::Index c = 0; c < net.biases[l].size(); ++c) {
        net.biases[l](c) = static_cast<Scalar>(b[static_cast<std::size_t>(c)].get<double>());
      }
    }
    return net;
  }
};

/// Adam over an Mlp-shaped parameter set.
template <typename Scalar>
class Adam {
 public:
  Adam(const Mlp<Scalar>& shape, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(shape.zeros_like()), v_(shape.zeros_like()), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  /// Descends along `grad`.
  void step(Mlp<Scalar>& params, const Mlp<Scalar>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    const auto alpha = static_cast<Scalar>(lr_ * std::sqrt(c2) / c1);
    const auto b1 = static_cast<Scalar>(b1_);
    const auto b2 = static_cast<Scalar>(b2_);
    const auto eps = static_cast<Scalar>(eps_ * std::sqrt(c2));
    auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
      p.array() -= alpha * m.array() / (v.array().sqrt() + eps);
    };
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
      update(params.weights[l], m_.weights[l], v_.weights[l], grad.weights[l]);
      update(params.biases[l], m_.biases[l], v_.biases[l], grad.biases[l]);
    }
  }

  void set_lr(double lr) { lr_ = lr; }

 private:
  Mlp<Scalar> m_;
  Mlp<Scalar> v_;
  double lr_;
  double b1_;
  double b2_;
  double eps_;
  int t_ = 0;
};

}  // namespace nsg

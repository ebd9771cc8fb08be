#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "topoprior/rng.hpp"

namespace topoprior {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Batched layers below take one sample per row.

/// y = W x + b.
struct Affine {
  Mat weight;  // out x in
  Vec bias;    // out

  Affine() = default;
  Affine(int in, int out)
      : weight(Mat::Zero(out, in)), bias(Vec::Zero(out)) {}

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }

  Vec apply(const Vec& x) const { return weight * x + bias; }
  Mat forward(const Mat& x) const;
  /// Accumulates into `grad` and returns d loss / d x.
  Mat backward(const Mat& x, const Mat& dy, Affine& grad) const;
  /// Like backward but skips the input gradient.
  void accumulate(const Mat& x, const Mat& dy, Affine& grad) const;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

inline Mat relu(const Mat& x) { return x.cwiseMax(0.0); }
inline Vec relu(const Vec& x) { return x.cwiseMax(0.0); }
/// dy masked where the pre-activation is not positive.
inline Mat relu_backward(const Mat& pre, const Mat& dy) {
  return (pre.array() > 0.0).select(dy, 0.0);
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}
/// log(1 + e^x) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Single GRU layer with separate input and hidden biases:
///   r = s(W_ir x + b_ir + W_hr h + b_hr)
///   u = s(W_iu x + b_iu + W_hu h + b_hu)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - u) * n + u * h
struct GruLayer {
  Mat w_ih;  // 3H x in, gate blocks ordered r, u, n
  Mat w_hh;  // 3H x H
  Vec b_ih;
  Vec b_hh;

  GruLayer() = default;
  GruLayer(int in, int hidden)
      : w_ih(Mat::Zero(3 * hidden, in)),
        w_hh(Mat::Zero(3 * hidden, hidden)),
        b_ih(Vec::Zero(3 * hidden)),
        b_hh(Vec::Zero(3 * hidden)) {}

  int hidden_dim() const { return static_cast<int>(w_hh.cols()); }
  int in_dim() const { return static_cast<int>(w_ih.cols()); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w_ih", w_ih);
    f(prefix + ".w_hh", w_hh);
    f(prefix + ".b_ih", b_ih);
    f(prefix + ".b_hh", b_hh);
  }
};

struct GruCache {
  Mat x, h_prev, r, u, n, hn;
};

/// One step for a batch; fills `cache` when non-null.
Mat gru_forward(const GruLayer& layer, const Mat& x, const Mat& h,
                GruCache* cache);

/// Backpropagates d loss / d h' through one step. Accumulates parameter
/// gradients, writes d loss / d x into `dx` when non-null and returns
/// d loss / d h.
Mat gru_backward(const GruLayer& layer, const GruCache& cache, const Mat& dh,
                 GruLayer& grad, Mat* dx);

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_fan_in(Mat& weight, int fan_in, Rng& rng);

/// Masked, numerically stable softmax over one row of logits. Masked entries
/// get probability exactly 0.
Vec masked_softmax(const Vec& logits, const std::vector<bool>& allowed);

struct ParamRef {
  std::string name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index size() const { return rows * cols; }
};

}  // namespace topoprior

#include "topoprior/nn.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "topoprior/error.hpp"

namespace topoprior {

std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void restore_rng_state(Rng& rng, const std::string& state) {
  std::istringstream in(state);
  in >> rng;
  if (!in) throw CheckpointError("malformed rng state");
}

Mat Affine::forward(const Mat& x) const {
  Mat y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

void Affine::accumulate(const Mat& x, const Mat& dy, Affine& grad) const {
  grad.weight.noalias() += dy.transpose() * x;
  grad.bias.noalias() += dy.colwise().sum().transpose();
}

Mat Affine::backward(const Mat& x, const Mat& dy, Affine& grad) const {
  accumulate(x, dy, grad);
  return dy * weight;
}

Mat gru_forward(const GruLayer& layer, const Mat& x, const Mat& h,
                GruCache* cache) {
  const Eigen::Index hd = layer.hidden_dim();
  Mat gi = x * layer.w_ih.transpose();
  gi.rowwise() += layer.b_ih.transpose();
  Mat gh = h * layer.w_hh.transpose();
  gh.rowwise() += layer.b_hh.transpose();

  const auto logistic = [](double v) { return sigmoid(v); };
  Mat r = (gi.leftCols(hd) + gh.leftCols(hd)).unaryExpr(logistic);
  Mat u = (gi.middleCols(hd, hd) + gh.middleCols(hd, hd)).unaryExpr(logistic);
  Mat hn = gh.rightCols(hd);
  Mat n = (gi.rightCols(hd).array() + r.array() * hn.array()).tanh().matrix();
  Mat out = ((1.0 - u.array()) * n.array() + u.array() * h.array()).matrix();
  if (cache != nullptr) {
    cache->x = x;
    cache->h_prev = h;
    cache->r = std::move(r);
    cache->u = std::move(u);
    cache->n = std::move(n);
    cache->hn = std::move(hn);
  }
  return out;
}

Mat gru_backward(const GruLayer& layer, const GruCache& c, const Mat& dh,
                 GruLayer& grad, Mat* dx) {
  const Eigen::Index hd = layer.hidden_dim();
  const auto rows = dh.rows();
  const Eigen::ArrayXXd dn = dh.array() * (1.0 - c.u.array());
  const Eigen::ArrayXXd du = dh.array() * (c.h_prev.array() - c.n.array());
  const Eigen::ArrayXXd dn_pre = dn * (1.0 - c.n.array().square());
  const Eigen::ArrayXXd du_pre = du * c.u.array() * (1.0 - c.u.array());
  const Eigen::ArrayXXd dr_pre =
      dn_pre * c.hn.array() * c.r.array() * (1.0 - c.r.array());

  Mat d_gi(rows, 3 * hd);
  d_gi.leftCols(hd) = dr_pre.matrix();
  d_gi.middleCols(hd, hd) = du_pre.matrix();
  d_gi.rightCols(hd) = dn_pre.matrix();
  Mat d_gh = d_gi;
  d_gh.rightCols(hd) = (dn_pre * c.r.array()).matrix();

  grad.w_ih.noalias() += d_gi.transpose() * c.x;
  grad.b_ih.noalias() += d_gi.colwise().sum().transpose();
  grad.w_hh.noalias() += d_gh.transpose() * c.h_prev;
  grad.b_hh.noalias() += d_gh.colwise().sum().transpose();
  if (dx != nullptr) *dx = d_gi * layer.w_ih;
  Mat dh_prev = (dh.array() * c.u.array()).matrix();
  dh_prev.noalias() += d_gh * layer.w_hh;
  return dh_prev;
}

void init_fan_in(Mat& weight, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index j = 0; j < weight.cols(); ++j)
    for (Eigen::Index i = 0; i < weight.rows(); ++i) weight(i, j) = dist(rng);
}

Vec masked_softmax(const Vec& logits, const std::vector<bool>& allowed) {
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (allowed[i]) top = std::max(top, logits[i]);
  Vec p = Vec::Zero(logits.size());
  if (!std::isfinite(top)) return p;
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (!allowed[i]) continue;
    p[i] = std::exp(logits[i] - top);
    total += p[i];
  }
  return p / total;
}

}  // namespace topoprior

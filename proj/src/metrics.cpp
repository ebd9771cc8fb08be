#include "topoprior/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "topoprior/error.hpp"
#include "topoprior/evosim.hpp"

namespace topoprior {

double motif_score(const CollaborationGraph& graph, const CollaborationGraph& oracle) {
  return edge_f1(graph, oracle);
}

namespace {

std::vector<int> sorted_classes(const std::vector<int>& labels) {
  std::vector<int> classes = labels;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  return classes;
}

void check_labels(const Eigen::MatrixXd& samples, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != samples.rows())
    throw ValidationError("one label per sample row is required");
}

}  // namespace

double probe_accuracy(const Eigen::MatrixXd& samples, const std::vector<int>& labels,
                      const ProbeOptions& options) {
  check_labels(samples, labels);
  const std::vector<int> classes = sorted_classes(labels);
  const int k = static_cast<int>(classes.size());
  if (k < 2) throw ValidationError("a probe needs at least two classes");
  std::map<int, int> class_index;
  for (int c = 0; c < k; ++c) class_index[classes[c]] = c;

  Rng rng(derive_seed(options.seed, 0x960b));
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
  for (const int c : classes) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < samples.rows(); ++i)
      if (labels[i] == c) rows.push_back(i);
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n_train = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(options.train_fraction * rows.size())));
    if (n_train >= rows.size())
      throw ValidationError("every class needs held-out rows for the probe");
    train.insert(train.end(), rows.begin(), rows.begin() + n_train);
    test.insert(test.end(), rows.begin() + n_train, rows.end());
  }

  const auto gather = [&](const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(idx.size()), samples.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) x.row(i) = samples.row(idx[i]);
    return x;
  };
  Eigen::MatrixXd x_train = gather(train);
  Eigen::MatrixXd x_test = gather(test);
  const Eigen::RowVectorXd mean = x_train.colwise().mean();
  const Eigen::RowVectorXd scale =
      ((x_train.rowwise() - mean).array().square().colwise().mean())
          .unaryExpr([](double v) { return v > 1e-24 ? 1.0 / std::sqrt(v) : 1.0; });
  x_train = (x_train.rowwise() - mean).array().rowwise() * scale.array();
  x_test = (x_test.rowwise() - mean).array().rowwise() * scale.array();

  const Eigen::Index n = x_train.rows();
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) target(i, class_index[labels[train[i]]]) = 1.0;
  const double max_sq = x_train.rowwise().squaredNorm().maxCoeff();
  const double lr = 1.0 / (0.5 * (max_sq + 1.0) + options.l2);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(samples.cols(), k);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(k);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Eigen::MatrixXd logits = (x_train * w).rowwise() + b;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double top = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - top).exp();
      logits.row(i) /= logits.row(i).sum();
    }
    const Eigen::MatrixXd d = (logits - target) / static_cast<double>(n);
    w -= lr * (x_train.transpose() * d + options.l2 * w);
    b -= lr * d.colwise().sum();
  }

  const Eigen::MatrixXd scores = (x_test * w).rowwise() + b;
  int correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    if (classes[best] == labels[test[i]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

double silhouette(const Eigen::MatrixXd& samples, const std::vector<int>& labels) {
  check_labels(samples, labels);
  const std::vector<int> classes = sorted_classes(labels);
  if (classes.size() < 2) throw ValidationError("silhouette needs at least two clusters");
  std::map<int, int> class_index;
  for (std::size_t c = 0; c < classes.size(); ++c) class_index[classes[c]] = static_cast<int>(c);
  const Eigen::Index n = samples.rows();
  const Eigen::VectorXd sq = samples.rowwise().squaredNorm();
  Eigen::MatrixXd dist = samples * samples.transpose();
  dist = ((-2.0 * dist).colwise() + sq).rowwise() + sq.transpose();
  dist = dist.cwiseMax(0.0).cwiseSqrt();

  std::vector<int> label_index(n);
  std::vector<int> counts(classes.size(), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    label_index[i] = class_index[labels[i]];
    ++counts[label_index[i]];
  }
  double total = 0.0;
  std::vector<double> sums(classes.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) sums[label_index[j]] += dist(i, j);
    const int own = label_index[i];
    if (counts[own] < 2) continue;
    const double a = sums[own] / (counts[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes.size(); ++c)
      if (static_cast<int>(c) != own && counts[c] > 0) b = std::min(b, sums[c] / counts[c]);
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

LatentSummary latent_summary(const Eigen::MatrixXd& samples,
                             const std::vector<int>& labels,
                             const ProbeOptions& options) {
  check_labels(samples, labels);
  LatentSummary out;
  out.domain_ids = sorted_classes(labels);
  if (out.domain_ids.size() < 2)
    throw ValidationError("latent summary needs samples from at least two domains");
  for (const int d : out.domain_ids) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(samples.cols());
    int count = 0;
    for (Eigen::Index i = 0; i < samples.rows(); ++i)
      if (labels[i] == d) {
        sum += samples.row(i).transpose();
        ++count;
      }
    if (count < 10)
      throw ValidationError("domain " + std::to_string(d) + " has fewer than 10 samples");
    out.centroids.push_back(sum / count);
  }
  out.silhouette = silhouette(samples, labels);
  out.probe_accuracy = probe_accuracy(samples, labels, options);
  return out;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

std::vector<std::pair<int, double>> rank_centroids(const Eigen::VectorXd& z,
                                                   const LatentSummary& summary) {
  std::vector<std::pair<int, double>> out;
  for (std::size_t c = 0; c < summary.centroids.size(); ++c)
    out.emplace_back(summary.domain_ids[c], cosine_similarity(z, summary.centroids[c]));
  std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  return out;
}

std::vector<std::pair<int, double>> route_unseen(const Eigen::VectorXd& h_q,
                                                 const PriorParams& prior,
                                                 const LatentSummary& summary) {
  return rank_centroids(prior_mean(h_q, prior), summary);
}

Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& samples) {
  if (samples.rows() == 0) return Eigen::MatrixXd(0, 2);
  const Eigen::MatrixXd centered = samples.rowwise() - samples.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index d = samples.cols();
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(d, 2);
  for (int c = 0; c < 2 && c < d; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    basis.col(c) = v;
  }
  return centered * basis;
}

std::vector<LatentPoint> latent_points(const Eigen::MatrixXd& samples,
                                       const std::vector<int>& labels) {
  check_labels(samples, labels);
  const Eigen::MatrixXd proj = pca_2d(samples);
  std::vector<LatentPoint> out;
  for (Eigen::Index i = 0; i < proj.rows(); ++i)
    out.push_back({labels[i], proj(i, 0), proj(i, 1)});
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class Row, class Parse>
std::vector<Row> read_csv(std::istream& in, const std::string& header, Parse parse) {
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line) || line != header)
    throw ParseError("expected CSV header '" + header + "'", 0);
  offset += line.size() + 1;
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      const auto fields = split_csv(line);
      try {
        if (fields.size() != 3) throw std::invalid_argument("field count");
        rows.push_back(parse(fields));
      } catch (const std::exception&) {
        throw ParseError("malformed CSV row '" + line + "'", offset);
      }
    }
    offset += line.size() + 1;
  }
  return rows;
}

}  // namespace

void write_latent_points_csv(std::ostream& out, const std::vector<LatentPoint>& rows) {
  out << "domain_id,pc1,pc2\n";
  out.precision(17);
  for (const auto& r : rows) out << r.domain_id << ',' << r.pc1 << ',' << r.pc2 << '\n';
}

std::vector<LatentPoint> read_latent_points_csv(std::istream& in) {
  return read_csv<LatentPoint>(in, "domain_id,pc1,pc2", [](const auto& f) {
    return LatentPoint{std::stoi(f[0]), std::stod(f[1]), std::stod(f[2])};
  });
}

void write_centroid_similarity_csv(std::ostream& out,
                                   const std::vector<CentroidSimilarity>& rows) {
  out << "query_id,domain_id,cosine\n";
  out.precision(17);
  for (const auto& r : rows)
    out << r.query_id << ',' << r.domain_id << ',' << r.cosine << '\n';
}

std::vector<CentroidSimilarity> read_centroid_similarity_csv(std::istream& in) {
  return read_csv<CentroidSimilarity>(in, "query_id,domain_id,cosine", [](const auto& f) {
    return CentroidSimilarity{f[0], std::stoi(f[1]), std::stod(f[2])};
  });
}

}  // namespace topoprior

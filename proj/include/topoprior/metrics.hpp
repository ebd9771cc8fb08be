#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "topoprior/graphs.hpp"
#include "topoprior/prior.hpp"

namespace topoprior {

/// Edge F1 against the oracle; empty against empty scores 1.
double motif_score(const CollaborationGraph& graph, const CollaborationGraph& oracle);

struct LatentSummary {
  std::vector<int> domain_ids;            // sorted, one per centroid
  std::vector<Eigen::VectorXd> centroids;
  double silhouette = 0.0;
  double probe_accuracy = 0.0;
};

struct ProbeOptions {
  int epochs = 300;
  double l2 = 1e-3;
  double train_fraction = 0.5;
  std::uint64_t seed = 0;
};

/// Held-out accuracy of a fresh affine + softmax classifier. Each class is
/// split separately into train and test rows; features are standardized on
/// the training rows.
double probe_accuracy(const Eigen::MatrixXd& samples, const std::vector<int>& labels,
                      const ProbeOptions& options = {});

/// Mean Euclidean silhouette; a point alone in its cluster scores 0.
double silhouette(const Eigen::MatrixXd& samples, const std::vector<int>& labels);

/// Requires at least 2 domains with at least 10 rows each.
LatentSummary latent_summary(const Eigen::MatrixXd& samples,
                             const std::vector<int>& labels,
                             const ProbeOptions& options = {});

/// Cosine similarity, 0 when either vector is zero.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Domains ranked by cosine similarity of z to their centroid, descending,
/// ties broken by lower domain id.
std::vector<std::pair<int, double>> rank_centroids(const Eigen::VectorXd& z,
                                                   const LatentSummary& summary);

/// rank_centroids on z = prior_mean(h_q).
std::vector<std::pair<int, double>> route_unseen(const Eigen::VectorXd& h_q,
                                                 const PriorParams& prior,
                                                 const LatentSummary& summary);

/// Rows projected on the top two principal components. Each component's sign
/// is fixed so its largest-magnitude loading is positive.
Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& samples);

struct LatentPoint {
  int domain_id = 0;
  double pc1 = 0.0;
  double pc2 = 0.0;
};

struct CentroidSimilarity {
  std::string query_id;
  int domain_id = 0;
  double cosine = 0.0;
};

void write_latent_points_csv(std::ostream& out, const std::vector<LatentPoint>& rows);
std::vector<LatentPoint> read_latent_points_csv(std::istream& in);
void write_centroid_similarity_csv(std::ostream& out,
                                   const std::vector<CentroidSimilarity>& rows);
std::vector<CentroidSimilarity> read_centroid_similarity_csv(std::istream& in);

/// Points of `samples` in PCA space, one per row.
std::vector<LatentPoint> latent_points(const Eigen::MatrixXd& samples,
                                       const std::vector<int>& labels);

}  // namespace topoprior

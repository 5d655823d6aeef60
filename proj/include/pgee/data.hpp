#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pgee {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Column naming used when reading a long-format CSV file.
/// An empty `covariate_cols` selects every column that is not the subject,
/// time or response column, in header order.
struct ColumnSchema {
  std::string subject_col = "subject";
  std::string time_col = "time";
  std::string response_col = "y";
  std::vector<std::string> covariate_cols;
};

/// Read-only view of one subject's block.
struct ClusterView {
  Eigen::Ref<const VectorXd> y;
  Eigen::Ref<const MatrixXd> X;
  std::span<const double> times;
  Index size;
};

/// Clustered observations stored as contiguous per-subject row blocks.
///
/// Rows of subject i occupy [offset(i), offset(i) + cluster_size(i)) of the
/// pooled response vector and covariate matrix.  Instances are immutable
/// once constructed, which makes them safe to share between worker threads.
class LongitudinalDataset {
 public:
  LongitudinalDataset() = default;

  /// Builds a dataset from already grouped rows.  `sizes` gives T_i for each
  /// subject in order; rows must already be sorted by time within subject.
  /// Throws DataError if any invariant is violated.
  LongitudinalDataset(std::vector<std::string> subject_ids, std::vector<Index> sizes,
                      std::vector<double> times, VectorXd y, MatrixXd X,
                      std::vector<std::string> covariate_names = {},
                      std::string response_name = "y");

  Index num_subjects() const { return static_cast<Index>(subject_ids_.size()); }
  Index num_observations() const { return y_.size(); }
  Index num_covariates() const { return X_.cols(); }

  Index cluster_size(Index i) const { return sizes_[static_cast<std::size_t>(i)]; }
  Index offset(Index i) const { return offsets_[static_cast<std::size_t>(i)]; }
  Index max_cluster_size() const;

  const std::vector<std::string>& subject_ids() const { return subject_ids_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  const std::string& response_name() const { return response_name_; }
  const std::vector<double>& times() const { return times_; }
  const VectorXd& y() const { return y_; }
  const MatrixXd& X() const { return X_; }

  ClusterView cluster(Index i) const;

 private:
  std::vector<std::string> subject_ids_;
  std::vector<Index> sizes_;
  std::vector<Index> offsets_;
  std::vector<double> times_;
  VectorXd y_;
  MatrixXd X_;
  std::vector<std::string> covariate_names_;
  std::string response_name_;
};

/// Pooled location/scale of every covariate and of the response.
struct ScalingInfo {
  VectorXd x_mean;
  VectorXd x_sd;
  double y_mean = 0.0;
  double y_sd = 1.0;
  bool response_scaled = true;

  /// Maps coefficients estimated on the standardized scale back to the
  /// original covariate/response units.
  VectorXd to_original(const VectorXd& beta_std) const;
  /// Intercept of the original-scale model implied by centring.
  double original_intercept(const VectorXd& beta_std) const;
};

struct StandardizedData {
  LongitudinalDataset data;
  ScalingInfo scaling;
};

/// Reads a long-format CSV file.  Subjects appear in first-appearance order;
/// rows are sorted by time within subject.
LongitudinalDataset load_dataset(const std::string& path, const ColumnSchema& schema = {});

/// Same as load_dataset but parses CSV text held in memory.
LongitudinalDataset parse_dataset(const std::string& csv_text, const ColumnSchema& schema = {});

/// Centres and scales every covariate to pooled mean 0 / variance 1 (divisor N).
/// The response is treated the same way unless `scale_response` is false
/// (binary responses).
StandardizedData standardize(const LongitudinalDataset& d, bool scale_response = true);

LongitudinalDataset destandardize(const LongitudinalDataset& d, const ScalingInfo& info);

/// Contiguous block for subject `i`; throws std::out_of_range if i is not a subject index.
ClusterView cluster_view(const LongitudinalDataset& d, Index i);

/// Writes the dataset as long-format CSV (`subject,time,<response>,<covariates...>`).
std::string to_csv(const LongitudinalDataset& d);

/// Largest deviation of any pooled column mean from 0 or variance from 1.
double standardization_defect(const LongitudinalDataset& d);

}  // namespace pgee

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace miclust {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Hard cluster assignment: labels[i] in [0, k). Clusters may be empty.
struct Partition {
  std::vector<int> labels;
  int k = 0;

  int n() const { return static_cast<int>(labels.size()); }
};

// Throws InvalidArgument when labels fall outside [0, k).
void validate_partition(const Partition& part, const std::string& context);

// Counts per label, length k.
std::vector<int> partition_counts(const Partition& part);

// Rectangular continuous data with an observation mask. Missing cells hold
// NaN in `values` and false in `mask`. `ref_labels` carries a reference
// partition (simulated truth or a labelled benchmark); it is never visible
// to imputation or clustering.
struct Dataset {
  Eigen::MatrixXd values;
  BoolMatrix mask;
  std::vector<std::string> columns;
  std::optional<Partition> ref_labels;
  std::string label_column = "label";

  Eigen::Index n() const { return values.rows(); }
  Eigen::Index p() const { return values.cols(); }
  Eigen::Index missing_count() const;
  bool complete() const { return missing_count() == 0; }
};

// Complete dataset around a value matrix; columns default to x1..xp.
Dataset make_dataset(const Eigen::MatrixXd& values);

// Dimension and mask/NaN consistency checks.
void validate_dataset(const Dataset& ds, const std::string& context);

// Reads a CSV with a header row. Cells equal to `na_token` (after trimming
// surrounding spaces) become missing. When `label_column` is non-empty that
// column is parsed as integer labels, removed from the data block and stored
// as ref_labels (distinct values are mapped onto 0..k-1 in sorted order).
// Malformed input raises ParseError with the offending row and column.
Dataset load_csv(const std::string& path, const std::string& na_token = "NA",
                 const std::string& label_column = "");

// Writes values with enough digits (%.17g) that a reload reproduces every
// double bit for bit. ref_labels, when present, are appended as a final
// integer column.
void save_csv(const Dataset& ds, const std::string& path,
              const std::string& na_token = "NA");

// Which columns may serve as regressors for each target column in chained
// imputation. allow[j][l] is true when column l can predict column j; the
// diagonal is always false.
struct PredictorMatrix {
  std::vector<std::vector<bool>> allow;

  int p() const { return static_cast<int>(allow.size()); }
  static PredictorMatrix all_predictors(int p);
};

// CSV with one header row and one leading name column, cells 0 or 1.
PredictorMatrix load_predictor_csv(const std::string& path);

void save_predictor_csv(const PredictorMatrix& pm,
                        const std::vector<std::string>& columns,
                        const std::string& path);

// Checks shape against the dataset, a false diagonal, and that every column
// with missing cells keeps at least one allowed predictor.
void validate_predictor_matrix(const PredictorMatrix& pm, const Dataset& ds);

}  // namespace miclust

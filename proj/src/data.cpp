#include "data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "errors.hpp"

namespace miclust {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& cell, size_t row, size_t col) {
  const std::string t = trim(cell);
  double v = 0.0;
  const char* begin = t.data();
  const char* end = begin + t.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end)
    throw ParseError("row " + std::to_string(row) + ", column " +
                     std::to_string(col + 1) + ": cannot parse '" + t +
                     "' as a number");
  return v;
}

long parse_long(const std::string& cell, size_t row, size_t col) {
  const std::string t = trim(cell);
  long v = 0;
  const char* begin = t.data();
  const char* end = begin + t.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end)
    throw ParseError("row " + std::to_string(row) + ", column " +
                     std::to_string(col + 1) + ": cannot parse '" + t +
                     "' as an integer label");
  return v;
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void validate_partition(const Partition& part, const std::string& context) {
  if (part.k <= 0)
    throw InvalidArgument(context + ": partition needs k > 0");
  for (size_t i = 0; i < part.labels.size(); ++i) {
    if (part.labels[i] < 0 || part.labels[i] >= part.k)
      throw InvalidArgument(context + ": label " +
                            std::to_string(part.labels[i]) + " at row " +
                            std::to_string(i) + " outside [0, " +
                            std::to_string(part.k) + ")");
  }
}

std::vector<int> partition_counts(const Partition& part) {
  std::vector<int> counts(part.k, 0);
  for (int label : part.labels) counts[label]++;
  return counts;
}

Eigen::Index Dataset::missing_count() const {
  return mask.size() - mask.count();
}

Dataset make_dataset(const Eigen::MatrixXd& values) {
  Dataset ds;
  ds.values = values;
  ds.mask = BoolMatrix::Constant(values.rows(), values.cols(), true);
  ds.columns.reserve(values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j)
    ds.columns.push_back("x" + std::to_string(j + 1));
  return ds;
}

void validate_dataset(const Dataset& ds, const std::string& context) {
  if (ds.mask.rows() != ds.values.rows() || ds.mask.cols() != ds.values.cols())
    throw InvalidArgument(context + ": mask shape differs from values");
  if (static_cast<Eigen::Index>(ds.columns.size()) != ds.values.cols())
    throw InvalidArgument(context + ": column name count differs from values");
  for (Eigen::Index i = 0; i < ds.values.rows(); ++i)
    for (Eigen::Index j = 0; j < ds.values.cols(); ++j)
      if (ds.mask(i, j) && std::isnan(ds.values(i, j)))
        throw InvalidArgument(context + ": observed cell (" +
                              std::to_string(i) + ", " + std::to_string(j) +
                              ") holds NaN");
  if (ds.ref_labels) {
    if (ds.ref_labels->n() != ds.values.rows())
      throw InvalidArgument(context + ": ref_labels length differs from rows");
    validate_partition(*ds.ref_labels, context);
  }
}

Dataset load_csv(const std::string& path, const std::string& na_token,
                 const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  std::string line;
  if (!std::getline(in, line))
    throw ParseError("'" + path + "': empty file, expected a header row");
  std::vector<std::string> header = split_line(line);
  for (auto& h : header) h = trim(h);
  if (header.empty()) throw ParseError("'" + path + "': empty header row");

  long label_idx = -1;
  if (!label_column.empty()) {
    for (size_t j = 0; j < header.size(); ++j)
      if (header[j] == label_column) label_idx = static_cast<long>(j);
    if (label_idx < 0)
      throw ParseError("'" + path + "': label column '" + label_column +
                       "' not found in header");
  }

  const size_t width = header.size();
  std::vector<std::vector<double>> rows;
  std::vector<long> raw_labels;
  std::vector<std::vector<bool>> observed;
  size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != width)
      throw ParseError("'" + path + "': row " + std::to_string(row_number) +
                       " has " + std::to_string(cells.size()) +
                       " fields, expected " + std::to_string(width));
    std::vector<double> vals;
    std::vector<bool> obs;
    for (size_t j = 0; j < width; ++j) {
      if (static_cast<long>(j) == label_idx) {
        raw_labels.push_back(parse_long(cells[j], row_number, j));
        continue;
      }
      const std::string cell = trim(cells[j]);
      if (cell == na_token) {
        vals.push_back(std::numeric_limits<double>::quiet_NaN());
        obs.push_back(false);
      } else {
        vals.push_back(parse_double(cells[j], row_number, j));
        obs.push_back(true);
      }
    }
    rows.push_back(std::move(vals));
    observed.push_back(std::move(obs));
  }

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index p =
      static_cast<Eigen::Index>(width - (label_idx >= 0 ? 1 : 0));
  Dataset ds;
  ds.values.resize(n, p);
  ds.mask.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) {
      ds.values(i, j) = rows[i][j];
      ds.mask(i, j) = observed[i][j];
    }
  for (size_t j = 0; j < width; ++j)
    if (static_cast<long>(j) != label_idx) ds.columns.push_back(header[j]);

  if (label_idx >= 0) {
    std::map<long, int> mapping;
    for (long v : raw_labels) mapping.emplace(v, 0);
    int next = 0;
    for (auto& [value, code] : mapping) code = next++;
    Partition part;
    part.k = next;
    part.labels.reserve(raw_labels.size());
    for (long v : raw_labels) part.labels.push_back(mapping[v]);
    ds.ref_labels = std::move(part);
    ds.label_column = label_column;
  }
  validate_dataset(ds, "load_csv('" + path + "')");
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path,
              const std::string& na_token) {
  validate_dataset(ds, "save_csv('" + path + "')");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (Eigen::Index j = 0; j < ds.p(); ++j) {
    if (j) out << ',';
    out << ds.columns[j];
  }
  if (ds.ref_labels) out << ',' << ds.label_column;
  out << '\n';
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    for (Eigen::Index j = 0; j < ds.p(); ++j) {
      if (j) out << ',';
      if (ds.mask(i, j))
        out << format_value(ds.values(i, j));
      else
        out << na_token;
    }
    if (ds.ref_labels) out << ',' << ds.ref_labels->labels[i];
    out << '\n';
  }
  if (!out) throw IoError("failed while writing '" + path + "'");
}

PredictorMatrix PredictorMatrix::all_predictors(int p) {
  PredictorMatrix pm;
  pm.allow.assign(p, std::vector<bool>(p, true));
  for (int j = 0; j < p; ++j) pm.allow[j][j] = false;
  return pm;
}

PredictorMatrix load_predictor_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("'" + path + "': empty file, expected a header row");
  const size_t width = split_line(line).size();
  if (width < 2)
    throw ParseError("'" + path +
                     "': predictor matrix needs a name column plus data");
  const size_t p = width - 1;
  PredictorMatrix pm;
  size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != width)
      throw ParseError("'" + path + "': row " + std::to_string(row_number) +
                       " has " + std::to_string(cells.size()) +
                       " fields, expected " + std::to_string(width));
    std::vector<bool> row;
    for (size_t j = 1; j < width; ++j) {
      const long v = parse_long(cells[j], row_number, j);
      if (v != 0 && v != 1)
        throw ParseError("'" + path + "': row " + std::to_string(row_number) +
                         ", column " + std::to_string(j + 1) +
                         ": expected 0 or 1");
      row.push_back(v == 1);
    }
    pm.allow.push_back(std::move(row));
  }
  if (pm.allow.size() != p)
    throw ParseError("'" + path + "': expected " + std::to_string(p) +
                     " rows to match the " + std::to_string(p) +
                     " named columns, found " +
                     std::to_string(pm.allow.size()));
  return pm;
}

void save_predictor_csv(const PredictorMatrix& pm,
                        const std::vector<std::string>& columns,
                        const std::string& path) {
  if (static_cast<int>(columns.size()) != pm.p())
    throw InvalidArgument("save_predictor_csv: column name count mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "target";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  for (int j = 0; j < pm.p(); ++j) {
    out << columns[j];
    for (int l = 0; l < pm.p(); ++l) out << ',' << (pm.allow[j][l] ? 1 : 0);
    out << '\n';
  }
}

void validate_predictor_matrix(const PredictorMatrix& pm, const Dataset& ds) {
  if (pm.p() != ds.p())
    throw InvalidArgument("predictor matrix is " + std::to_string(pm.p()) +
                          "x" + std::to_string(pm.p()) + " but data has " +
                          std::to_string(ds.p()) + " columns");
  for (int j = 0; j < pm.p(); ++j) {
    if (pm.allow[j][j])
      throw InvalidArgument("predictor matrix allows column " +
                            std::to_string(j) + " to predict itself");
  }
  for (Eigen::Index j = 0; j < ds.p(); ++j) {
    bool has_missing = false;
    for (Eigen::Index i = 0; i < ds.n(); ++i)
      if (!ds.mask(i, j)) { has_missing = true; break; }
    if (!has_missing) continue;
    bool any_pred = false;
    for (int l = 0; l < pm.p(); ++l)
      if (pm.allow[j][l]) { any_pred = true; break; }
    if (!any_pred)
      throw InvalidArgument("column " + std::to_string(j) +
                            " has missing cells but no allowed predictors");
  }
}

}  // namespace miclust

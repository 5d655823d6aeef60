#include "pgee/data.hpp"

#include "pgee/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace pgee {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool is_missing_token(const std::string& s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "." || s == "null";
}

double parse_number(const std::string& raw, std::size_t line_no, const std::string& column) {
  const std::string s = trim(raw);
  if (is_missing_token(s)) {
    throw DataError("missing value in column '" + column + "' at line " + std::to_string(line_no));
  }
  double value = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw DataError("non-numeric value '" + s + "' in column '" + column + "' at line " +
                    std::to_string(line_no));
  }
  if (!std::isfinite(value)) {
    throw DataError("non-finite value in column '" + column + "' at line " + std::to_string(line_no));
  }
  return value;
}

std::string format_time(double t) {
  std::ostringstream os;
  os.precision(17);
  os << t;
  return os.str();
}

}  // namespace

LongitudinalDataset::LongitudinalDataset(std::vector<std::string> subject_ids,
                                         std::vector<Index> sizes, std::vector<double> times,
                                         VectorXd y, MatrixXd X,
                                         std::vector<std::string> covariate_names,
                                         std::string response_name)
    : subject_ids_(std::move(subject_ids)),
      sizes_(std::move(sizes)),
      times_(std::move(times)),
      y_(std::move(y)),
      X_(std::move(X)),
      covariate_names_(std::move(covariate_names)),
      response_name_(std::move(response_name)) {
  if (subject_ids_.size() != sizes_.size()) {
    throw DataError("subject id count does not match cluster size count");
  }
  if (subject_ids_.empty()) throw DataError("dataset has no subjects");
  if (X_.cols() < 1) throw DataError("dataset needs at least one covariate");
  if (X_.rows() != y_.size() || static_cast<Index>(times_.size()) != y_.size()) {
    throw DataError("response, time and covariate row counts differ");
  }
  offsets_.resize(sizes_.size());
  Index total = 0;
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (sizes_[i] < 1) throw DataError("subject '" + subject_ids_[i] + "' has no observations");
    offsets_[i] = total;
    total += sizes_[i];
  }
  if (total != y_.size()) throw DataError("cluster sizes do not sum to the row count");
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    for (Index t = 1; t < sizes_[i]; ++t) {
      const auto r = static_cast<std::size_t>(offsets_[i] + t);
      if (!(times_[r] > times_[r - 1])) {
        throw DataError("times not strictly increasing for subject '" + subject_ids_[i] + "'");
      }
    }
  }
  if (!y_.allFinite() || !X_.allFinite()) throw DataError("dataset contains non-finite values");
  if (covariate_names_.empty()) {
    for (Index j = 0; j < X_.cols(); ++j) covariate_names_.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Index>(covariate_names_.size()) != X_.cols()) {
    throw DataError("covariate name count does not match column count");
  }
}

Index LongitudinalDataset::max_cluster_size() const {
  return sizes_.empty() ? 0 : *std::max_element(sizes_.begin(), sizes_.end());
}

ClusterView LongitudinalDataset::cluster(Index i) const {
  if (i < 0 || i >= num_subjects()) {
    throw std::out_of_range("subject index " + std::to_string(i) + " out of range [0, " +
                            std::to_string(num_subjects()) + ")");
  }
  const Index off = offset(i);
  const Index len = cluster_size(i);
  return ClusterView{y_.segment(off, len), X_.middleRows(off, len),
                     std::span<const double>(times_.data() + off, static_cast<std::size_t>(len)),
                     len};
}

ClusterView cluster_view(const LongitudinalDataset& d, Index i) { return d.cluster(i); }

LongitudinalDataset parse_dataset(const std::string& csv_text, const ColumnSchema& schema) {
  std::istringstream in(csv_text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw DataError("CSV input has no header");
  if (header.front().rfind("\xEF\xBB\xBF", 0) == 0) header.front().erase(0, 3);
  for (auto& h : header) h = trim(h);

  auto find_col = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t sid = find_col(schema.subject_col);
  const std::size_t tid = find_col(schema.time_col);
  const std::size_t rid = find_col(schema.response_col);
  std::vector<std::size_t> cov_idx;
  std::vector<std::string> cov_names;
  if (schema.covariate_cols.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != sid && c != tid && c != rid) {
        cov_idx.push_back(c);
        cov_names.push_back(header[c]);
      }
    }
  } else {
    for (const auto& name : schema.covariate_cols) {
      cov_idx.push_back(find_col(name));
      cov_names.push_back(name);
    }
  }
  if (cov_idx.empty()) throw DataError("no covariate columns identified");

  struct Row {
    double time;
    double y;
    std::vector<double> x;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Row>> groups;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(header.size()));
    }
    const std::string subject = trim(fields[sid]);
    if (is_missing_token(subject)) {
      throw DataError("missing subject id at line " + std::to_string(line_no));
    }
    Row row;
    row.time = parse_number(fields[tid], line_no, header[tid]);
    row.y = parse_number(fields[rid], line_no, header[rid]);
    row.x.reserve(cov_idx.size());
    for (std::size_t c : cov_idx) row.x.push_back(parse_number(fields[c], line_no, header[c]));
    auto [it, inserted] = groups.try_emplace(subject);
    if (inserted) order.push_back(subject);
    it->second.push_back(std::move(row));
  }
  if (order.empty()) throw DataError("CSV input has no data rows");

  std::size_t total = 0;
  for (const auto& s : order) total += groups[s].size();
  const auto p = static_cast<Index>(cov_idx.size());
  VectorXd y(static_cast<Index>(total));
  MatrixXd X(static_cast<Index>(total), p);
  std::vector<double> times;
  std::vector<Index> sizes;
  times.reserve(total);
  Index r = 0;
  for (const auto& s : order) {
    auto& rows = groups[s];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.time < b.time; });
    for (std::size_t k = 1; k < rows.size(); ++k) {
      if (rows[k].time == rows[k - 1].time) {
        throw DataError("duplicate observation for subject '" + s + "' at time " +
                        format_time(rows[k].time));
      }
    }
    for (const auto& row : rows) {
      y(r) = row.y;
      for (Index j = 0; j < p; ++j) X(r, j) = row.x[static_cast<std::size_t>(j)];
      times.push_back(row.time);
      ++r;
    }
    sizes.push_back(static_cast<Index>(rows.size()));
  }
  return LongitudinalDataset(order, std::move(sizes), std::move(times), std::move(y), std::move(X),
                             std::move(cov_names), header[rid]);
}

LongitudinalDataset load_dataset(const std::string& path, const ColumnSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open input file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), schema);
}

namespace {

std::pair<double, double> pooled_moments(const Eigen::Ref<const VectorXd>& v) {
  const double mean = v.mean();
  const double var = (v.array() - mean).square().mean();
  return {mean, std::sqrt(var)};
}

}  // namespace

StandardizedData standardize(const LongitudinalDataset& d, bool scale_response) {
  const Index p = d.num_covariates();
  ScalingInfo info;
  info.x_mean.resize(p);
  info.x_sd.resize(p);
  MatrixXd X = d.X();
  for (Index j = 0; j < p; ++j) {
    const auto [mean, sd] = pooled_moments(d.X().col(j));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      throw DataError("covariate column '" + d.covariate_names()[static_cast<std::size_t>(j)] +
                      "' is constant");
    }
    info.x_mean(j) = mean;
    info.x_sd(j) = sd;
    X.col(j) = (X.col(j).array() - mean) / sd;
  }
  VectorXd y = d.y();
  info.response_scaled = scale_response;
  if (scale_response) {
    const auto [mean, sd] = pooled_moments(d.y());
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      throw DataError("response column '" + d.response_name() + "' is constant");
    }
    info.y_mean = mean;
    info.y_sd = sd;
    y = (y.array() - mean) / sd;
  }
  std::vector<Index> sizes;
  for (Index i = 0; i < d.num_subjects(); ++i) sizes.push_back(d.cluster_size(i));
  return {LongitudinalDataset(d.subject_ids(), std::move(sizes), d.times(), std::move(y),
                              std::move(X), d.covariate_names(), d.response_name()),
          std::move(info)};
}

LongitudinalDataset destandardize(const LongitudinalDataset& d, const ScalingInfo& info) {
  if (info.x_mean.size() != d.num_covariates()) {
    throw std::invalid_argument("scaling info does not match covariate count");
  }
  MatrixXd X = d.X();
  for (Index j = 0; j < X.cols(); ++j) {
    X.col(j) = X.col(j).array() * info.x_sd(j) + info.x_mean(j);
  }
  VectorXd y = d.y();
  if (info.response_scaled) y = y.array() * info.y_sd + info.y_mean;
  std::vector<Index> sizes;
  for (Index i = 0; i < d.num_subjects(); ++i) sizes.push_back(d.cluster_size(i));
  return LongitudinalDataset(d.subject_ids(), std::move(sizes), d.times(), std::move(y),
                             std::move(X), d.covariate_names(), d.response_name());
}

VectorXd ScalingInfo::to_original(const VectorXd& beta_std) const {
  if (beta_std.size() != x_sd.size()) throw std::invalid_argument("coefficient length mismatch");
  const double ys = response_scaled ? y_sd : 1.0;
  return (beta_std.array() * ys / x_sd.array()).matrix();
}

double ScalingInfo::original_intercept(const VectorXd& beta_std) const {
  const double base = response_scaled ? y_mean : 0.0;
  return base - to_original(beta_std).dot(x_mean);
}

std::string to_csv(const LongitudinalDataset& d) {
  std::ostringstream os;
  os.precision(17);
  os << "subject,time," << d.response_name();
  for (const auto& name : d.covariate_names()) os << ',' << name;
  os << '\n';
  for (Index i = 0; i < d.num_subjects(); ++i) {
    const auto c = d.cluster(i);
    for (Index t = 0; t < c.size; ++t) {
      os << d.subject_ids()[static_cast<std::size_t>(i)] << ',' << c.times[static_cast<std::size_t>(t)]
         << ',' << c.y(t);
      for (Index j = 0; j < c.X.cols(); ++j) os << ',' << c.X(t, j);
      os << '\n';
    }
  }
  return os.str();
}

double standardization_defect(const LongitudinalDataset& d) {
  double worst = 0.0;
  for (Index j = 0; j < d.num_covariates(); ++j) {
    const auto [mean, sd] = pooled_moments(d.X().col(j));
    worst = std::max({worst, std::abs(mean), std::abs(sd * sd - 1.0)});
  }
  return worst;
}

}  // namespace pgee

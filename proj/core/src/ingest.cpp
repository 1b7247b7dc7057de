#include "bcap/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <utility>
#include <vector>

#include "bcap/stats.hpp"

namespace bcap {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string location(const std::string& path, int line_no) {
  return path + ":" + std::to_string(line_no) + ": ";
}

double parse_double(const std::string& cell, const std::string& path,
                    int line_no) {
  const char* s = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0')
    throw ParseError(location(path, line_no) + "not a number: '" + cell + "'");
  return v;
}

long parse_int(const std::string& cell, const std::string& path, int line_no) {
  const char* s = cell.c_str();
  char* end = nullptr;
  const long v = std::strtol(s, &end, 10);
  if (end == s || *end != '\0')
    throw ParseError(location(path, line_no) + "not an integer: '" + cell + "'");
  return v;
}

// reads all lines, strips trailing \r, drops trailing blank lines
std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

void check_header(const std::vector<std::string>& cells,
                  const std::vector<std::string>& expect,
                  const std::string& path) {
  bool ok = cells.size() == expect.size();
  for (size_t i = 0; ok && i < cells.size(); ++i) ok = cells[i] == expect[i];
  if (!ok) {
    std::string want;
    for (const auto& e : expect) want += (want.empty() ? "" : ",") + e;
    throw ParseError(location(path, 1) + "expected header '" + want + "'");
  }
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

TimeSeriesDataset load(const std::string& signals_path,
                       const std::string& covariates_path,
                       bool add_intercept) {
  const std::vector<std::string> sig_lines = read_lines(signals_path);
  if (sig_lines.empty()) throw ParseError(signals_path + ": empty file");
  const std::vector<std::string> sig_header = split_csv(sig_lines[0]);
  if (sig_header.size() < 3)
    throw ParseError(location(signals_path, 1) +
                     "expected header subject,t,y1,...");
  const int p = static_cast<int>(sig_header.size()) - 2;
  {
    std::vector<std::string> expect{"subject", "t"};
    for (int j = 1; j <= p; ++j) expect.push_back("y" + std::to_string(j));
    check_header(sig_header, expect, signals_path);
  }

  // subjects in order of first appearance; rows must arrive grouped with
  // t contiguous from 1
  std::vector<std::string> ids;
  std::vector<std::vector<Vector>> rows;  // per subject
  std::map<std::string, size_t> index;
  for (size_t ln = 1; ln < sig_lines.size(); ++ln) {
    if (sig_lines[ln].empty()) continue;
    const int line_no = static_cast<int>(ln) + 1;
    const std::vector<std::string> cells = split_csv(sig_lines[ln]);
    if (static_cast<int>(cells.size()) != p + 2)
      throw ParseError(location(signals_path, line_no) + "expected " +
                       std::to_string(p + 2) + " cells, got " +
                       std::to_string(cells.size()));
    const std::string& id = cells[0];
    auto [it, fresh] = index.try_emplace(id, ids.size());
    if (fresh) {
      ids.push_back(id);
      rows.emplace_back();
    }
    std::vector<Vector>& subject = rows[it->second];
    const long t = parse_int(cells[1], signals_path, line_no);
    if (t != static_cast<long>(subject.size()) + 1)
      throw ParseError(location(signals_path, line_no) + "subject '" + id +
                       "': expected t=" + std::to_string(subject.size() + 1) +
                       ", got " + std::to_string(t));
    Vector y(p);
    for (int j = 0; j < p; ++j)
      y(j) = parse_double(cells[size_t(j) + 2], signals_path, line_no);
    subject.push_back(std::move(y));
  }

  const std::vector<std::string> cov_lines = read_lines(covariates_path);
  if (cov_lines.empty()) throw ParseError(covariates_path + ": empty file");
  const std::vector<std::string> cov_header = split_csv(cov_lines[0]);
  if (cov_header.size() < 2)
    throw ParseError(location(covariates_path, 1) +
                     "expected header subject,x1,...");
  const int q_raw = static_cast<int>(cov_header.size()) - 1;
  {
    std::vector<std::string> expect{"subject"};
    for (int j = 1; j <= q_raw; ++j) expect.push_back("x" + std::to_string(j));
    check_header(cov_header, expect, covariates_path);
  }
  std::map<std::string, Vector> cov;
  for (size_t ln = 1; ln < cov_lines.size(); ++ln) {
    if (cov_lines[ln].empty()) continue;
    const int line_no = static_cast<int>(ln) + 1;
    const std::vector<std::string> cells = split_csv(cov_lines[ln]);
    if (static_cast<int>(cells.size()) != q_raw + 1)
      throw ParseError(location(covariates_path, line_no) + "expected " +
                       std::to_string(q_raw + 1) + " cells, got " +
                       std::to_string(cells.size()));
    if (cov.count(cells[0]))
      throw ParseError(location(covariates_path, line_no) +
                       "duplicate subject '" + cells[0] + "'");
    Vector x(q_raw);
    for (int j = 0; j < q_raw; ++j)
      x(j) = parse_double(cells[size_t(j) + 1], covariates_path, line_no);
    cov.emplace(cells[0], std::move(x));
  }

  TimeSeriesDataset ds;
  ds.p = p;
  ds.q = q_raw + (add_intercept ? 1 : 0);
  for (size_t i = 0; i < ids.size(); ++i) {
    auto it = cov.find(ids[i]);
    if (it == cov.end())
      throw ParseError(covariates_path + ": missing subject '" + ids[i] +
                       "' present in " + signals_path);
    Matrix y(static_cast<int>(rows[i].size()), p);
    for (size_t l = 0; l < rows[i].size(); ++l)
      y.row(static_cast<int>(l)) = rows[i][l].transpose();
    Vector x(ds.q);
    if (add_intercept) {
      x(0) = 1.0;
      x.tail(q_raw) = it->second;
    } else {
      x = it->second;
    }
    ds.ids.push_back(ids[i]);
    ds.signals.push_back(std::move(y));
    ds.covariates.push_back(std::move(x));
  }
  ds.validate();
  return ds;
}

void write_dataset(const TimeSeriesDataset& data,
                   const std::string& signals_path,
                   const std::string& covariates_path,
                   bool drop_leading_covariate) {
  data.validate();
  if (drop_leading_covariate && data.q < 2)
    throw ArgumentError("write_dataset: no covariate left after dropping the intercept");

  std::ofstream sig(signals_path);
  if (!sig) throw Error("write_dataset: cannot open " + signals_path);
  sig << "subject,t";
  for (int j = 1; j <= data.p; ++j) sig << ",y" << j;
  sig << "\n";
  for (int i = 0; i < data.n(); ++i) {
    const Matrix& y = data.signals[size_t(i)];
    for (int l = 0; l < y.rows(); ++l) {
      sig << data.ids[size_t(i)] << ',' << (l + 1);
      for (int j = 0; j < data.p; ++j) sig << ',' << fmt17(y(l, j));
      sig << "\n";
    }
  }

  const int skip = drop_leading_covariate ? 1 : 0;
  std::ofstream covf(covariates_path);
  if (!covf) throw Error("write_dataset: cannot open " + covariates_path);
  covf << "subject";
  for (int j = 1; j <= data.q - skip; ++j) covf << ",x" << j;
  covf << "\n";
  for (int i = 0; i < data.n(); ++i) {
    covf << data.ids[size_t(i)];
    for (int j = skip; j < data.q; ++j)
      covf << ',' << fmt17(data.covariates[size_t(i)](j));
    covf << "\n";
  }
}

int effective_sample_size(const TimeSeriesDataset& data) {
  data.validate();
  if (data.n() == 0)
    throw ArgumentError("effective_sample_size: empty dataset");
  double min_ratio = std::numeric_limits<double>::infinity();
  for (int i = 0; i < data.n(); ++i) {
    const Matrix& y = data.signals[size_t(i)];
    const int t = static_cast<int>(y.rows());
    if (t < 4)
      throw ArgumentError("effective_sample_size: subject '" +
                          data.ids[size_t(i)] + "' has T=" + std::to_string(t) +
                          " < 4");
    for (int j = 0; j < data.p; ++j) {
      const Vector col = y.col(j);
      double tau = 0.0;
      try {
        tau = integrated_autocorr_time(col.data(), t);
      } catch (const DegenerateError&) {
        throw DegenerateError("effective_sample_size: subject '" +
                              data.ids[size_t(i)] + "' coordinate " +
                              std::to_string(j + 1) + " is constant");
      }
      min_ratio = std::min(min_ratio, double(t) / tau);
    }
  }
  return std::max(1, static_cast<int>(std::floor(min_ratio)));
}

TimeSeriesDataset thin(const TimeSeriesDataset& data, int target_T) {
  data.validate();
  if (target_T < 1) throw ArgumentError("thin: target_T must be positive");
  for (int i = 0; i < data.n(); ++i)
    if (data.T(i) < target_T)
      throw ArgumentError("thin: target_T=" + std::to_string(target_T) +
                          " exceeds T=" + std::to_string(data.T(i)) +
                          " of subject '" + data.ids[size_t(i)] + "'");

  TimeSeriesDataset out;
  out.p = data.p;
  out.q = data.q;
  out.ids = data.ids;
  out.covariates = data.covariates;
  for (int i = 0; i < data.n(); ++i) {
    const Matrix& y = data.signals[size_t(i)];
    const int stride = data.T(i) / target_T;
    Matrix kept(target_T, data.p);
    for (int l = 0; l < target_T; ++l) kept.row(l) = y.row(l * stride);
    kept.rowwise() -= kept.colwise().mean();
    out.signals.push_back(std::move(kept));
  }
  return out;
}

}  // namespace bcap

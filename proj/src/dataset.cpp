#include "empdyn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "empdyn/errors.hpp"

namespace empdyn {

long SparseDataset::total_obs() const {
  long n = 0;
  for (const auto& s : subjects) n += s.n_obs();
  return n;
}

void SparseDataset::validate() const {
  if (subjects.empty()) throw config_error("dataset has no subjects");
  bool any_pair = false;
  for (const auto& s : subjects) {
    if (s.times.size() != s.values.size())
      throw config_error("subject " + s.id + ": times/values length mismatch");
    if (s.times.empty()) throw config_error("subject " + s.id + " has no observations");
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      if (!std::isfinite(s.times[j]) || !std::isfinite(s.values[j]))
        throw config_error("subject " + s.id + ": non-finite observation");
      if (!domain.contains(s.times[j]))
        throw config_error("subject " + s.id + ": time outside domain");
      if (j > 0 && !(s.times[j] > s.times[j - 1]))
        throw config_error("subject " + s.id + ": times not strictly increasing");
    }
    if (s.n_obs() >= 2) any_pair = true;
  }
  if (!any_pair)
    throw config_error("no subject has two or more observations; covariance is not estimable");
}

namespace {

bool parse_double(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc{} && res.ptr == last;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

SparseDataset load_csv(const std::string& path, std::optional<Interval> domain_override,
                       LoadStats* stats, bool log_values) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open input file: " + path);

  struct Row {
    std::string id;
    double t;
    double y;
  };
  std::vector<Row> rows;
  std::string line;
  long line_no = 0;
  bool first_data_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;

    const auto c1 = sv.find(',');
    const auto c2 = c1 == std::string_view::npos ? std::string_view::npos : sv.find(',', c1 + 1);
    if (c2 == std::string_view::npos)
      throw config_error(path + ":" + std::to_string(line_no) + ": expected subject_id,time,value");
    std::string_view f0 = trim(sv.substr(0, c1));
    std::string_view f1 = trim(sv.substr(c1 + 1, c2 - c1 - 1));
    std::string_view f2 = trim(sv.substr(c2 + 1));

    double t, y;
    const bool numeric = parse_double(f1, t) && parse_double(f2, y);
    if (!numeric) {
      if (first_data_line) {  // optional header row
        first_data_line = false;
        continue;
      }
      throw config_error(path + ":" + std::to_string(line_no) + ": malformed row");
    }
    first_data_line = false;
    if (f0.empty())
      throw config_error(path + ":" + std::to_string(line_no) + ": empty subject id");
    if (!std::isfinite(t) || !std::isfinite(y))
      throw config_error(path + ":" + std::to_string(line_no) + ": non-finite value");
    rows.push_back({std::string(f0), t, log_values ? std::log(y) : y});
    if (log_values && !(y > 0.0))
      throw config_error(path + ":" + std::to_string(line_no) + ": log transform needs positive values");
  }
  if (stats) stats->rows_read = static_cast<long>(rows.size());
  if (rows.empty()) throw config_error(path + ": no data rows");

  if (domain_override) {
    std::vector<Row> kept;
    kept.reserve(rows.size());
    for (auto& r : rows) {
      if (domain_override->contains(r.t))
        kept.push_back(std::move(r));
      else if (stats)
        ++stats->rows_dropped_outside_domain;
    }
    rows = std::move(kept);
    if (rows.empty()) throw config_error(path + ": no rows inside domain override");
  }

  // Group by id, keeping first-appearance order.
  std::vector<SubjectRecord> subjects;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    auto it = index.find(r.id);
    if (it == index.end()) {
      index.emplace(r.id, subjects.size());
      subjects.push_back({r.id, {}, {}});
      it = index.find(r.id);
    }
    subjects[it->second].times.push_back(r.t);
    subjects[it->second].values.push_back(r.y);
  }
  for (auto& s : subjects) {
    std::vector<int> ord(s.times.size());
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(),
                     [&](int i, int j) { return s.times[i] < s.times[j]; });
    std::vector<double> ts(ord.size()), ys(ord.size());
    for (std::size_t k = 0; k < ord.size(); ++k) {
      ts[k] = s.times[ord[k]];
      ys[k] = s.values[ord[k]];
    }
    for (std::size_t k = 1; k < ts.size(); ++k)
      if (ts[k] == ts[k - 1])
        throw config_error("subject " + s.id + ": duplicate observation time " +
                           std::to_string(ts[k]));
    s.times = std::move(ts);
    s.values = std::move(ys);
  }

  SparseDataset data;
  data.subjects = std::move(subjects);
  if (domain_override) {
    data.domain = *domain_override;
  } else {
    double lo = rows.front().t, hi = rows.front().t;
    for (const auto& r : rows) {
      lo = std::min(lo, r.t);
      hi = std::max(hi, r.t);
    }
    data.domain = {lo, hi};
  }
  data.validate();
  return data;
}

void write_csv(const SparseDataset& data, const std::string& path, const std::string& meta) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot open output file: " + path);
  if (!meta.empty()) out << "# " << meta << "\n";
  out << "subject_id,time,value\n";
  char buf[64];
  for (const auto& s : data.subjects) {
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      out << s.id << ',';
      std::snprintf(buf, sizeof buf, "%.17g", s.times[j]);
      out << buf << ',';
      std::snprintf(buf, sizeof buf, "%.17g", s.values[j]);
      out << buf << '\n';
    }
  }
}

double EvalGrid::interp(const Eigen::VectorXd& values, double x) const {
  const int m = size();
  if (x <= t(0)) return values(0);
  if (x >= t(m - 1)) return values(m - 1);
  // uniform spacing: direct cell lookup
  const double h = (t(m - 1) - t(0)) / (m - 1);
  int i = static_cast<int>((x - t(0)) / h);
  if (i >= m - 1) i = m - 2;
  if (x < t(i)) --i;          // guard against rounding at cell edges
  else if (x > t(i + 1)) ++i;
  const double s = (x - t(i)) / (t(i + 1) - t(i));
  return (1.0 - s) * values(i) + s * values(i + 1);
}

EvalGrid make_grid(Interval domain, int m) {
  if (m < 2) throw config_error("grid size must be at least 2");
  if (!(domain.b > domain.a)) throw config_error("domain must have positive length");
  EvalGrid g;
  g.t.resize(m);
  g.w.resize(m);
  const double h = domain.length() / (m - 1);
  for (int i = 0; i < m; ++i) g.t(i) = domain.a + h * i;
  g.t(m - 1) = domain.b;
  g.w.setConstant(h);
  g.w(0) = h / 2.0;
  g.w(m - 1) = h / 2.0;
  return g;
}

}  // namespace empdyn

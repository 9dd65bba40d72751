#include "empdyn/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

#include "empdyn/errors.hpp"

namespace empdyn {

std::string config_hash_hex(const std::string& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string meta_line(const std::string& config_hash, std::uint64_t seed) {
  return std::string("empdyn ") + kVersion + " config=" + config_hash +
         " seed=" + std::to_string(seed);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_columns_csv(const std::string& path, const std::string& meta,
                       const std::vector<std::string>& names,
                       const std::vector<const Eigen::VectorXd*>& cols) {
  if (names.size() != cols.size() || cols.empty())
    throw config_error("write_columns_csv: names and columns must match");
  const auto rows = cols.front()->size();
  for (const auto* c : cols)
    if (c->size() != rows) throw config_error("write_columns_csv: ragged columns");

  std::ofstream out(path);
  if (!out) throw config_error("cannot open output file: " + path);
  if (!meta.empty()) out << "# " << meta << "\n";
  for (std::size_t j = 0; j < names.size(); ++j)
    out << names[j] << (j + 1 < names.size() ? ',' : '\n');
  char buf[64];
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", (*cols[j])(i));
      out << buf << (j + 1 < cols.size() ? ',' : '\n');
    }
  }
}

void write_matrix_csv(const std::string& path, const std::string& meta,
                      const Eigen::MatrixXd& mat) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot open output file: " + path);
  if (!meta.empty()) out << "# " << meta << "\n";
  for (Eigen::Index j = 0; j < mat.cols(); ++j)
    out << 'c' << j << (j + 1 < mat.cols() ? ',' : '\n');
  char buf[64];
  for (Eigen::Index i = 0; i < mat.rows(); ++i) {
    for (Eigen::Index j = 0; j < mat.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", mat(i, j));
      out << buf << (j + 1 < mat.cols() ? ',' : '\n');
    }
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r')
    out.back().pop_back();
  return out;
}

double parse_cell(const std::string& tok, const std::string& path) {
  double v;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw config_error(path + ": malformed numeric cell '" + tok + "'");
  return v;
}

}  // namespace

Eigen::VectorXd CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return cols.col(static_cast<Eigen::Index>(j));
  throw config_error("missing CSV column: " + name);
}

bool CsvTable::has(const std::string& name) const {
  for (const auto& n : names)
    if (n == name) return true;
  return false;
}

CsvTable read_columns_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open input file: " + path);
  std::string line;
  CsvTable table;
  std::vector<std::vector<double>> data;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_csv(line);
    if (!have_header) {
      table.names = cells;
      have_header = true;
      continue;
    }
    if (cells.size() != table.names.size())
      throw config_error(path + ": ragged row");
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) row[j] = parse_cell(cells[j], path);
    data.push_back(std::move(row));
  }
  if (!have_header) throw config_error(path + ": empty file");
  table.cols.resize(static_cast<Eigen::Index>(data.size()),
                    static_cast<Eigen::Index>(table.names.size()));
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = 0; j < data[i].size(); ++j)
      table.cols(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i][j];
  return table;
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  CsvTable t = read_columns_csv(path);
  return t.cols;
}

}  // namespace empdyn

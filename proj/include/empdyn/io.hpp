#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace empdyn {

inline constexpr const char* kVersion = "0.1.0";

// FNV-1a hash of a canonical option string, printed as 16 hex digits.
std::string config_hash_hex(const std::string& canonical);

// "empdyn <version> config=<hash> seed=<seed>" comment line for outputs.
std::string meta_line(const std::string& config_hash, std::uint64_t seed);

// Column-oriented CSV with one header row; doubles round-trip exactly.
void write_columns_csv(const std::string& path, const std::string& meta,
                       const std::vector<std::string>& names,
                       const std::vector<const Eigen::VectorXd*>& cols);

void write_matrix_csv(const std::string& path, const std::string& meta,
                      const Eigen::MatrixXd& mat);

struct CsvTable {
  std::vector<std::string> names;
  Eigen::MatrixXd cols;  // rows x names

  Eigen::VectorXd column(const std::string& name) const;
  bool has(const std::string& name) const;
};

CsvTable read_columns_csv(const std::string& path);
Eigen::MatrixXd read_matrix_csv(const std::string& path);

std::string format_double(double v);

}  // namespace empdyn

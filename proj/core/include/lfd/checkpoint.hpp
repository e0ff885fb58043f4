#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <string>

#include "lfd/netcore.hpp"

namespace lfd {

// "MLP1" network file: magic, u32 version, role tag, then per layer a
// length-prefixed weight matrix (u64 rows, u64 cols, row-major f64) and bias
// (u64 n, f64), then a length-prefixed vector of extra parameters (e.g. the
// policy log-std). All values little-endian.
struct MlpCheckpoint {
  std::string role;
  Mlp net;
  Eigen::VectorXd extra;
};

void write_mlp(std::ostream& out, const Mlp& net, const std::string& role,
               const Eigen::VectorXd& extra = {});
MlpCheckpoint read_mlp(std::istream& in);

void save_mlp(const std::filesystem::path& path, const Mlp& net, const std::string& role,
              const Eigen::VectorXd& extra = {});
MlpCheckpoint load_mlp(const std::filesystem::path& path);

}  // namespace lfd

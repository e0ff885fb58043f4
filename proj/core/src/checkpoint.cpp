#include "lfd/checkpoint.hpp"

#include <fstream>

#include "binio.hpp"
#include "lfd/error.hpp"

namespace lfd {
namespace {

constexpr std::uint32_t kMlpFormatVersion = 1;
constexpr std::uint64_t kMaxDim = 1u << 20;

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  binio::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) binio::write_le<double>(out, v[i]);
}

Eigen::VectorXd read_vector(std::istream& in) {
  const auto n = binio::read_le<std::uint64_t>(in);
  if (n > kMaxDim) throw Error(ErrorCode::kParseError, "implausible vector length in MLP1 file");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = binio::read_le<double>(in);
  return v;
}

}  // namespace

void write_mlp(std::ostream& out, const Mlp& net, const std::string& role,
               const Eigen::VectorXd& extra) {
  binio::write_magic(out, "MLP1");
  binio::write_le<std::uint32_t>(out, kMlpFormatVersion);
  binio::write_string(out, role);
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.num_layers()));
  for (const auto& layer : net.layers()) {
    binio::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(layer.weight.rows()));
    binio::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(layer.weight.cols()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) binio::write_le<double>(out, layer.weight(r, c));
    }
    write_vector(out, layer.bias);
  }
  write_vector(out, extra);
}

MlpCheckpoint read_mlp(std::istream& in) {
  binio::expect_magic(in, "MLP1");
  const auto version = binio::read_le<std::uint32_t>(in);
  if (version != kMlpFormatVersion) {
    throw Error(ErrorCode::kSchemaVersionMismatch, "unsupported MLP1 version " + std::to_string(version));
  }
  MlpCheckpoint ck;
  ck.role = binio::read_string(in);
  const auto n_layers = binio::read_le<std::uint32_t>(in);
  if (n_layers == 0 || n_layers > 64) throw Error(ErrorCode::kParseError, "implausible layer count");
  auto& layers = ck.net.layers();
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const auto rows = binio::read_le<std::uint64_t>(in);
    const auto cols = binio::read_le<std::uint64_t>(in);
    if (rows > kMaxDim || cols > kMaxDim) throw Error(ErrorCode::kParseError, "implausible layer shape");
    DenseLayer layer;
    layer.weight.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = binio::read_le<double>(in);
    }
    layer.bias = read_vector(in);
    if (layer.bias.size() != layer.weight.rows()) {
      throw Error(ErrorCode::kParseError, "bias length does not match layer width");
    }
    if (!layers.empty() && layers.back().weight.rows() != layer.weight.cols()) {
      throw Error(ErrorCode::kParseError, "layer dimensions do not chain");
    }
    layers.push_back(std::move(layer));
  }
  ck.extra = read_vector(in);
  return ck;
}

void save_mlp(const std::filesystem::path& path, const Mlp& net, const std::string& role,
              const Eigen::VectorXd& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  write_mlp(out, net, role, extra);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

MlpCheckpoint load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return read_mlp(in);
}

}  // namespace lfd

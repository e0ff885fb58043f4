#include "lfd/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "binio.hpp"
#include "lfd/error.hpp"

namespace lfd {
namespace {

constexpr double kTau = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint32_t kSvmFormatVersion = 1;

}  // namespace

double kernel_eval(const KernelSpec& k, const Eigen::Ref<const Eigen::VectorXd>& a,
                   const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (k.type == KernelType::kLinear) return a.dot(b);
  return std::exp(-k.gamma * (a - b).squaredNorm());
}

Eigen::MatrixXd kernel_matrix(const KernelSpec& k, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd g = x.transpose() * x;
  if (k.type == KernelType::kLinear) return g;
  const Eigen::VectorXd sq = g.diagonal();
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double d2 = std::max(sq[i] + sq[j] - 2.0 * g(i, j), 0.0);
      g(i, j) = std::exp(-k.gamma * d2);
    }
  }
  return g;
}

BinaryDual smo_solve(const Eigen::MatrixXd& gram, std::span<const int> y, double c,
                     double tolerance, long max_iterations) {
  const auto n = static_cast<Eigen::Index>(y.size());
  BinaryDual out;
  out.alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd& alpha = out.alpha;
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);
  const Eigen::VectorXd qd = gram.diagonal();

  auto at_upper = [&](Eigen::Index t) { return alpha[t] >= c; };
  auto at_lower = [&](Eigen::Index t) { return alpha[t] <= 0.0; };
  auto q = [&](Eigen::Index i, Eigen::Index j) { return y[i] * y[j] * gram(i, j); };

  while (out.iterations < max_iterations) {
    // Maximal violating pair with second-order selection of j.
    double gmax = -kInf;
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (y[t] == +1) {
        if (!at_upper(t) && -grad[t] >= gmax) { gmax = -grad[t]; i = t; }
      } else {
        if (!at_lower(t) && grad[t] >= gmax) { gmax = grad[t]; i = t; }
      }
    }
    double gmax2 = -kInf;
    double obj_min = kInf;
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (y[t] == +1) {
        if (at_lower(t)) continue;
        const double diff = gmax + grad[t];
        gmax2 = std::max(gmax2, grad[t]);
        if (diff > 0.0 && i >= 0) {
          double quad = qd[i] + qd[t] - 2.0 * gram(t, i);
          if (quad <= 0.0) quad = kTau;
          const double obj = -(diff * diff) / quad;
          if (obj <= obj_min) { j = t; obj_min = obj; }
        }
      } else {
        if (at_upper(t)) continue;
        const double diff = gmax - grad[t];
        gmax2 = std::max(gmax2, -grad[t]);
        if (diff > 0.0 && i >= 0) {
          double quad = qd[i] + qd[t] - 2.0 * gram(t, i);
          if (quad <= 0.0) quad = kTau;
          const double obj = -(diff * diff) / quad;
          if (obj <= obj_min) { j = t; obj_min = obj; }
        }
      }
    }
    if (gmax + gmax2 < tolerance || i < 0 || j < 0) break;
    ++out.iterations;

    const double old_i = alpha[i], old_j = alpha[j];
    const double qij = q(i, j);
    if (y[i] != y[j]) {
      double quad = qd[i] + qd[j] + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = diff; }
      } else {
        if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = -diff; }
      }
      if (diff > 0.0) {
        if (alpha[i] > c) { alpha[i] = c; alpha[j] = c - diff; }
      } else {
        if (alpha[j] > c) { alpha[j] = c; alpha[i] = c + diff; }
      }
    } else {
      double quad = qd[i] + qd[j] - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) { alpha[i] = c; alpha[j] = sum - c; }
      } else {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = sum; }
      }
      if (sum > c) {
        if (alpha[j] > c) { alpha[j] = c; alpha[i] = sum - c; }
      } else {
        if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = sum; }
      }
    }
    const double dai = alpha[i] - old_i, daj = alpha[j] - old_j;
    for (Eigen::Index t = 0; t < n; ++t) {
      grad[t] += y[t] * (y[i] * gram(t, i) * dai + y[j] * gram(t, j) * daj);
    }
  }

  // rho from free vectors, or the midpoint of the feasible interval.
  double ub = kInf, lb = -kInf, sum_free = 0.0;
  int n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (at_upper(t)) {
      if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (at_lower(t)) {
      if (y[t] == +1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / n_free : 0.5 * (ub + lb);
  out.bias = -rho;
  return out;
}

SvmModel::SvmModel(int dim, SvmParams params, std::vector<BinaryMachine> machines)
    : dim_(dim), params_(params), machines_(std::move(machines)) {}

std::vector<double> SvmModel::decision_values(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "SVM expects " + std::to_string(dim_) +
                                                   " features, got " + std::to_string(x.size()));
  }
  std::vector<double> out;
  out.reserve(machines_.size());
  for (const auto& m : machines_) {
    double f = m.bias;
    for (Eigen::Index s = 0; s < m.support.cols(); ++s) {
      f += m.alpha[s] * m.sign[s] * kernel_eval(params_.kernel, m.support.col(s), x);
    }
    out.push_back(f);
  }
  return out;
}

int SvmModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const auto values = decision_values(x);
  size_t best = 0;
  for (size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return machines_.at(best).label;
}

bool SvmModel::operator==(const SvmModel& o) const {
  if (dim_ != o.dim_ || params_.c != o.params_.c || params_.kernel.type != o.params_.kernel.type ||
      params_.kernel.gamma != o.params_.kernel.gamma || machines_.size() != o.machines_.size()) {
    return false;
  }
  for (size_t k = 0; k < machines_.size(); ++k) {
    const auto& a = machines_[k];
    const auto& b = o.machines_[k];
    if (a.label != b.label || a.bias != b.bias || a.support != b.support || a.alpha != b.alpha ||
        a.sign != b.sign) {
      return false;
    }
  }
  return true;
}

void SvmModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  binio::write_magic(out, "GSVM1");
  binio::write_le<std::uint32_t>(out, kSvmFormatVersion);
  binio::write_le<std::int32_t>(out, dim_);
  binio::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(params_.kernel.type));
  binio::write_le<double>(out, params_.kernel.gamma);
  binio::write_le<double>(out, params_.c);
  binio::write_le<double>(out, params_.tolerance);
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(machines_.size()));
  for (const auto& m : machines_) {
    binio::write_le<std::int32_t>(out, m.label);
    binio::write_le<double>(out, m.bias);
    binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.support.cols()));
    for (Eigen::Index s = 0; s < m.support.cols(); ++s) {
      binio::write_le<double>(out, m.alpha[s]);
      binio::write_le<double>(out, m.sign[s]);
      for (Eigen::Index d = 0; d < m.support.rows(); ++d) binio::write_le<double>(out, m.support(d, s));
    }
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

SvmModel SvmModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  binio::expect_magic(in, "GSVM1");
  const auto version = binio::read_le<std::uint32_t>(in);
  if (version != kSvmFormatVersion) {
    throw Error(ErrorCode::kSchemaVersionMismatch, "unsupported GSVM1 version " + std::to_string(version));
  }
  const int dim = binio::read_le<std::int32_t>(in);
  SvmParams params;
  const auto ktype = binio::read_le<std::uint8_t>(in);
  if (ktype > 1) throw Error(ErrorCode::kParseError, "unknown kernel type");
  params.kernel.type = static_cast<KernelType>(ktype);
  params.kernel.gamma = binio::read_le<double>(in);
  params.c = binio::read_le<double>(in);
  params.tolerance = binio::read_le<double>(in);
  const auto n_machines = binio::read_le<std::uint32_t>(in);
  std::vector<BinaryMachine> machines(n_machines);
  for (auto& m : machines) {
    m.label = binio::read_le<std::int32_t>(in);
    m.bias = binio::read_le<double>(in);
    const auto n_sv = binio::read_le<std::uint32_t>(in);
    m.support.resize(dim, n_sv);
    m.alpha.resize(n_sv);
    m.sign.resize(n_sv);
    for (std::uint32_t s = 0; s < n_sv; ++s) {
      m.alpha[s] = binio::read_le<double>(in);
      m.sign[s] = binio::read_le<double>(in);
      for (int d = 0; d < dim; ++d) m.support(d, s) = binio::read_le<double>(in);
    }
  }
  return SvmModel(dim, params, std::move(machines));
}

SvmModel svm_train(const Eigen::MatrixXd& x, std::span<const int> labels, const SvmParams& params,
                   const Eigen::MatrixXd* gram) {
  if (static_cast<size_t>(x.cols()) != labels.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature/label count mismatch");
  }
  const std::set<int> classes(labels.begin(), labels.end());
  if (classes.size() < 2) {
    throw Error(ErrorCode::kDegenerateDataset, "SVM training needs at least two classes");
  }
  if (!(params.c > 0.0)) throw Error(ErrorCode::kConfigError, "SVM C must be > 0");

  Eigen::MatrixXd local_gram;
  if (gram == nullptr) {
    local_gram = kernel_matrix(params.kernel, x);
    gram = &local_gram;
  }

  std::vector<BinaryMachine> machines;
  std::vector<int> y(labels.size());
  for (int cls : classes) {
    for (size_t t = 0; t < labels.size(); ++t) y[t] = labels[t] == cls ? +1 : -1;
    const BinaryDual dual = smo_solve(*gram, y, params.c, params.tolerance, params.max_iterations);

    BinaryMachine m;
    m.label = cls;
    m.bias = dual.bias;
    std::vector<Eigen::Index> sv;
    for (Eigen::Index t = 0; t < dual.alpha.size(); ++t) {
      if (dual.alpha[t] > 0.0) sv.push_back(t);
    }
    m.support.resize(x.rows(), static_cast<Eigen::Index>(sv.size()));
    m.alpha.resize(static_cast<Eigen::Index>(sv.size()));
    m.sign.resize(static_cast<Eigen::Index>(sv.size()));
    for (size_t s = 0; s < sv.size(); ++s) {
      const auto e = static_cast<Eigen::Index>(s);
      m.support.col(e) = x.col(sv[s]);
      m.alpha[e] = dual.alpha[sv[s]];
      m.sign[e] = y[static_cast<size_t>(sv[s])];
    }
    machines.push_back(std::move(m));
  }
  return SvmModel(static_cast<int>(x.rows()), params, std::move(machines));
}

double svm_accuracy(const SvmModel& model, const Eigen::MatrixXd& x, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  size_t hits = 0;
  for (size_t t = 0; t < labels.size(); ++t) {
    if (model.predict(x.col(static_cast<Eigen::Index>(t))) == labels[t]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::kConfigError, "cross-validation needs k >= 2");
  if (labels.size() < static_cast<size_t>(k)) {
    throw Error(ErrorCode::kDegenerateDataset, "dataset smaller than fold count");
  }
  std::map<int, std::vector<size_t>> by_class;
  for (size_t t = 0; t < labels.size(); ++t) by_class[labels[t]].push_back(t);
  std::mt19937_64 rng(seed);
  std::vector<int> fold(labels.size(), 0);
  int next = 0;
  for (auto& [cls, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    // Continue dealing where the previous class stopped so folds stay balanced
    // in size as well as in class mix.
    for (size_t t : idx) {
      fold[t] = next;
      next = (next + 1) % k;
    }
  }
  return fold;
}

CvResult cross_validate(const Eigen::MatrixXd& x, std::span<const int> labels,
                        std::span<const GridPoint> grid, int k, std::uint64_t seed) {
  if (grid.empty()) throw Error(ErrorCode::kConfigError, "empty parameter grid");
  const std::vector<int> fold = stratified_folds(labels, k, seed);
  const std::set<int> all_classes(labels.begin(), labels.end());
  if (all_classes.size() < 2) throw Error(ErrorCode::kDegenerateDataset, "need at least two classes");

  std::vector<double> acc_sum(grid.size(), 0.0);
  for (int f = 0; f < k; ++f) {
    std::vector<Eigen::Index> tr, te;
    for (size_t t = 0; t < labels.size(); ++t) {
      (fold[t] == f ? te : tr).push_back(static_cast<Eigen::Index>(t));
    }
    Eigen::MatrixXd xtr(x.rows(), static_cast<Eigen::Index>(tr.size()));
    Eigen::MatrixXd xte(x.rows(), static_cast<Eigen::Index>(te.size()));
    std::vector<int> ytr, yte;
    for (size_t t = 0; t < tr.size(); ++t) {
      xtr.col(static_cast<Eigen::Index>(t)) = x.col(tr[t]);
      ytr.push_back(labels[static_cast<size_t>(tr[t])]);
    }
    for (size_t t = 0; t < te.size(); ++t) {
      xte.col(static_cast<Eigen::Index>(t)) = x.col(te[t]);
      yte.push_back(labels[static_cast<size_t>(te[t])]);
    }
    // Grid points sharing a kernel reuse one Gram matrix.
    std::vector<bool> done(grid.size(), false);
    for (size_t g = 0; g < grid.size(); ++g) {
      if (done[g]) continue;
      const Eigen::MatrixXd gram = kernel_matrix(grid[g].kernel, xtr);
      for (size_t h = g; h < grid.size(); ++h) {
        if (done[h] || grid[h].kernel.type != grid[g].kernel.type ||
            grid[h].kernel.gamma != grid[g].kernel.gamma) {
          continue;
        }
        SvmParams p;
        p.kernel = grid[h].kernel;
        p.c = grid[h].c;
        const std::set<int> fold_classes(ytr.begin(), ytr.end());
        if (fold_classes.size() < 2) {
          throw Error(ErrorCode::kDegenerateDataset, "a training fold has fewer than two classes");
        }
        const SvmModel model = svm_train(xtr, ytr, p, &gram);
        acc_sum[h] += te.empty() ? 0.0 : svm_accuracy(model, xte, yte);
        done[h] = true;
      }
    }
  }
  CvResult result;
  result.grid_accuracy.resize(grid.size());
  size_t best = 0;
  for (size_t g = 0; g < grid.size(); ++g) {
    result.grid_accuracy[g] = acc_sum[g] / k;
    if (result.grid_accuracy[g] > result.grid_accuracy[best]) best = g;
  }
  result.best = grid[best];
  result.best_accuracy = result.grid_accuracy[best];
  return result;
}

}  // namespace lfd

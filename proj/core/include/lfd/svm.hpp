#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lfd {

enum class KernelType : std::uint8_t { kLinear = 0, kRbf = 1 };

struct KernelSpec {
  KernelType type = KernelType::kRbf;
  double gamma = 1.0;  // rbf only: exp(-gamma * |a - b|^2)
};

struct SvmParams {
  KernelSpec kernel;
  double c = 1.0;
  double tolerance = 1e-3;  // KKT violation gap for SMO termination
  long max_iterations = 10'000'000;
};

double kernel_eval(const KernelSpec& k, const Eigen::Ref<const Eigen::VectorXd>& a,
                   const Eigen::Ref<const Eigen::VectorXd>& b);

// Gram matrix of the columns of `x` (dim x n).
Eigen::MatrixXd kernel_matrix(const KernelSpec& k, const Eigen::MatrixXd& x);

// Dual solution of one soft-margin binary problem.
struct BinaryDual {
  Eigen::VectorXd alpha;  // in [0, C]
  double bias = 0.0;      // f(x) = sum_i alpha_i y_i K(x_i, x) + bias
  long iterations = 0;
};

// SMO with second-order working-set selection on a precomputed Gram matrix.
// `y` holds +1/-1.
BinaryDual smo_solve(const Eigen::MatrixXd& gram, std::span<const int> y, double c,
                     double tolerance, long max_iterations);

// One-vs-rest machine for class `label`.
struct BinaryMachine {
  int label = 0;
  Eigen::MatrixXd support;    // dim x n_sv
  Eigen::VectorXd alpha;      // dual coefficients, in [0, C]
  Eigen::VectorXd sign;       // +1 for `label`, -1 otherwise
  double bias = 0.0;
};

class SvmModel {
 public:
  SvmModel() = default;
  SvmModel(int dim, SvmParams params, std::vector<BinaryMachine> machines);

  int dim() const { return dim_; }
  const SvmParams& params() const { return params_; }
  const std::vector<BinaryMachine>& machines() const { return machines_; }

  // One decision value per machine, in machine order.
  std::vector<double> decision_values(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  // argmax over decision values; ties go to the lowest machine index.
  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  // Binary file: "GSVM1" magic, little-endian.
  void save(const std::filesystem::path& path) const;
  static SvmModel load(const std::filesystem::path& path);

  bool operator==(const SvmModel& other) const;

 private:
  int dim_ = 0;
  SvmParams params_;
  std::vector<BinaryMachine> machines_;
};

// `x` is dim x n (one sample per column). Labels are arbitrary ints; one
// machine is trained per distinct label, in ascending label order. Requires at
// least two classes. Gram may be supplied to share it across calls.
SvmModel svm_train(const Eigen::MatrixXd& x, std::span<const int> labels, const SvmParams& params,
                   const Eigen::MatrixXd* gram = nullptr);

double svm_accuracy(const SvmModel& model, const Eigen::MatrixXd& x, std::span<const int> labels);

struct GridPoint {
  double c = 1.0;
  KernelSpec kernel;
};

struct CvResult {
  GridPoint best;
  double best_accuracy = 0.0;
  std::vector<double> grid_accuracy;  // mean over folds, in grid order
};

// Stratified folds: each class is shuffled with `seed` and dealt round-robin.
std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed);

// Grid search by stratified k-fold CV; the first grid point with the highest
// mean accuracy wins.
CvResult cross_validate(const Eigen::MatrixXd& x, std::span<const int> labels,
                        std::span<const GridPoint> grid, int k, std::uint64_t seed);

}  // namespace lfd

#pragma once

// Synthetic multiclass task, satellite partitioning, and the multinomial
// logistic model trained on it.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedspace/model.hpp"
#include "fedspace/rng.hpp"

namespace fedspace::learn {

struct Dataset {
  int dim = 0;
  int classes = 0;
  std::vector<double> features;  // row-major, size() x dim
  std::vector<int> labels;
  std::vector<int> zones;  // empty, or one zone id per sample

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const noexcept {
    return {features.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  int num_zones() const;
  void validate() const;
  bool operator==(const Dataset&) const = default;
};

/// Fixed generative task: Gaussian class clusters plus a class mixture per zone.
/// Several datasets sampled from one task share the decision problem.
struct SyntheticTask {
  int dim = 32;
  int classes = 10;
  int zones = 10;
  double separation = 3.0;
  std::vector<double> class_means;                // classes x dim
  std::vector<std::vector<double>> zone_mixture;  // zones x classes, rows sum to 1
  std::vector<double> noise_scale;                // per-dimension noise std
};

// `anisotropy` >= 1 spreads the per-dimension noise std log-uniformly over
// [anisotropy^-1/2, anisotropy^1/2]; 1 gives unit isotropic noise. Larger
// values make the logistic loss ill-conditioned.
SyntheticTask make_synthetic_task(int dim, int classes, double separation, int zones,
                                  double zone_concentration, Rng& rng, double anisotropy = 1.0);
Dataset sample_dataset(const SyntheticTask& task, std::size_t n, Rng& rng);

// One-shot generator; zone mixtures are Dirichlet(0.5).
Dataset generate_synthetic(std::size_t n, int dim, int classes, double separation, int zones, Rng& rng);

struct Partitioning {
  std::vector<int> assignment;  // satellite id per sample
  std::vector<std::size_t> counts;  // m_k

  int num_satellites() const noexcept { return static_cast<int>(counts.size()); }
  std::vector<std::vector<std::size_t>> members() const;
  void validate(std::size_t n_samples) const;
};

Partitioning partition_iid(const Dataset& data, int num_satellites, Rng& rng);

// `visits[k][z]` is how often satellite k passes zone z. Samples of zone z go
// to satellite k with probability visits[k][z] / sum_j visits[j][z].
Partitioning partition_noniid_by_visits(const Dataset& data,
                                        const std::vector<std::vector<int>>& visits, Rng& rng);

/// Multinomial logistic regression. Parameters are a classes x dim weight
/// matrix (row-major) followed by one bias per class.
struct LogisticModel {
  int dim = 0;
  int classes = 0;
  double l2 = 0.0;  // applied to weights only

  std::size_t num_params() const noexcept {
    return static_cast<std::size_t>(classes) * static_cast<std::size_t>(dim + 1);
  }
  ModelParams zeros() const { return ModelParams(num_params()); }
  void check(const ModelParams& w, const Dataset& data) const;
};

// Mean loss over `batch`; writes the analytic gradient into `grad` (size num_params).
double loss_and_grad(const LogisticModel& model, const ModelParams& w, const Dataset& data,
                     std::span<const std::size_t> batch, std::span<double> grad);
double mean_loss(const LogisticModel& model, const ModelParams& w, const Dataset& data);
double mean_loss(const LogisticModel& model, const ModelParams& w, const Dataset& data,
                 std::span<const std::size_t> batch);

int predict(const LogisticModel& model, const ModelParams& w, std::span<const double> x);
double evaluate(const LogisticModel& model, const ModelParams& w, const Dataset& validation);
std::vector<double> per_class_recall(const LogisticModel& model, const ModelParams& w,
                                     const Dataset& validation);

void save_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset_csv(const std::filesystem::path& path, int classes);
void save_partition_csv(const Partitioning& part, const std::filesystem::path& path);

}  // namespace fedspace::learn

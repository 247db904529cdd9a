#pragma once

// Learned aggregation utility: loss-reduction samples drawn from a pretraining
// run on a source task, and the regressor fitted to them.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fedspace/flcore.hpp"
#include "fedspace/forest.hpp"
#include "fedspace/learntask.hpp"
#include "fedspace/schedulers.hpp"

namespace fedspace::utility {

/// Predicted loss reduction of one aggregation from its featurized staleness vector.
class UtilityModel {
 public:
  virtual ~UtilityModel() = default;
  virtual double predict(std::span<const double> features) const = 0;
};

struct UtilitySample {
  std::vector<double> features;
  double delta_f = 0.0;
  int i_start = 0;  // pretraining round the aggregation was applied to
};

/// Source dataset split across K satellites, with the model it trains.
struct SourceTask {
  learn::LogisticModel model;
  const learn::Dataset* data = nullptr;
  std::vector<std::vector<std::size_t>> partitions;  // one per satellite

  int num_satellites() const noexcept { return static_cast<int>(partitions.size()); }
  void validate() const;
};

// Uniform: every entry of s uniform on {-1..s_max}.
// Participation: a fraction p ~ U(0, 1) of satellites contributes, each with
// staleness uniform on {0..s_max}; covers the sparse vectors seen in deployment.
enum class DrawMode { Uniform, Participation };

struct SamplerConfig {
  int pretrain_rounds = 60;  // I_max
  int s_max = 8;
  fl::LocalTrainConfig local;
  double alpha = 0.5;
  DrawMode draw = DrawMode::Uniform;
  std::uint64_t seed = 0;
};

/// Pretrains on the source task (each round: every satellite runs local SGD
/// from the current model, then the deltas are averaged) and keeps the model
/// sequence w^0..w^{I_max}. Local deltas are cached per (satellite, base round).
class UtilitySampler {
 public:
  UtilitySampler(SourceTask source, SamplerConfig config);

  const std::vector<ModelParams>& models() const noexcept { return models_; }
  const std::vector<double>& losses() const noexcept { return losses_; }
  const SamplerConfig& config() const noexcept { return config_; }
  const SourceTask& source() const noexcept { return source_; }

  // f(w^{i_start}) - f(w^{i_start} + staleness-weighted mean of contributing deltas)
  double delta_f(std::span<const int> staleness, int i_start);

  // One (s, i_start) draw; i_start is uniform on {s_max..I_max-1}.
  std::pair<std::vector<int>, int> draw(Rng& rng) const;

 private:
  const std::vector<double>& delta(int satellite, int base_index);

  SourceTask source_;
  SamplerConfig config_;
  std::vector<ModelParams> models_;
  std::vector<double> losses_;
  std::map<std::pair<int, int>, std::vector<double>> cache_;
};

std::vector<UtilitySample> generate_utility_samples(UtilitySampler& sampler, int count, Rng& rng);

void save_samples_csv(std::span<const UtilitySample> samples, int s_max, const std::filesystem::path& path);

struct RegressorParams {
  forest::ForestParams forest;
  double holdout_fraction = 0.2;
};

class UtilityRegressor final : public UtilityModel {
 public:
  static constexpr int kFormatVersion = 1;

  UtilityRegressor() = default;

  double predict(std::span<const double> features) const override;

  int s_max() const noexcept { return s_max_; }
  std::size_t sample_count() const noexcept { return sample_count_; }
  double holdout_mse() const noexcept { return holdout_mse_; }
  double holdout_variance() const noexcept { return holdout_variance_; }
  double target_variance() const noexcept { return target_variance_; }
  const forest::RegressionForest& forest() const noexcept { return forest_; }

  nlohmann::json to_json() const;
  static UtilityRegressor from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static UtilityRegressor load(const std::filesystem::path& path);

  friend UtilityRegressor fit_utility_regressor(std::span<const UtilitySample> samples, int s_max,
                                                const RegressorParams& params, Rng& rng);

 private:
  forest::RegressionForest forest_;
  int s_max_ = 0;
  std::size_t sample_count_ = 0;
  double holdout_mse_ = 0.0;
  double holdout_variance_ = 0.0;
  double target_variance_ = 0.0;
};

// Shuffles, holds out `holdout_fraction`, fits on the rest. Needs >= 20 samples
// with at least two distinct feature vectors.
UtilityRegressor fit_utility_regressor(std::span<const UtilitySample> samples, int s_max,
                                       const RegressorParams& params, Rng& rng);

}  // namespace fedspace::utility

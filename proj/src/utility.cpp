#include "fedspace/utility.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace fedspace::utility {
namespace {

constexpr const char* kFormatTag = "fedspace.utility-regressor";

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double variance(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

}  // namespace

void SourceTask::validate() const {
  if (data == nullptr) throw std::invalid_argument("source task: no dataset");
  if (partitions.empty()) throw std::invalid_argument("source task: no partitions");
  for (const auto& p : partitions)
    if (p.empty()) throw std::invalid_argument("source task: empty satellite partition");
  if (data->dim != model.dim || data->classes != model.classes)
    throw std::invalid_argument("source task: model/dataset shape mismatch");
}

UtilitySampler::UtilitySampler(SourceTask source, SamplerConfig config)
    : source_(std::move(source)), config_(config) {
  source_.validate();
  config_.local.validate();
  if (config_.s_max < 0) throw std::invalid_argument("utility sampler: s_max must be >= 0");
  if (config_.pretrain_rounds <= config_.s_max)
    throw std::invalid_argument("utility sampler: pretraining rounds must exceed s_max");

  models_.push_back(source_.model.zeros());
  losses_.push_back(learn::mean_loss(source_.model, models_.back(), *source_.data));
  const int K = source_.num_satellites();
  for (int r = 0; r < config_.pretrain_rounds; ++r) {
    std::vector<fl::BufferEntry> buffer;
    buffer.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) buffer.push_back({{delta(k, r), r}, 0, k});
    models_.push_back(fl::aggregate(models_.back(), buffer, config_.alpha));
    losses_.push_back(learn::mean_loss(source_.model, models_.back(), *source_.data));
  }
}

const std::vector<double>& UtilitySampler::delta(int satellite, int base_index) {
  const auto key = std::make_pair(satellite, base_index);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const auto& part = source_.partitions.at(static_cast<std::size_t>(satellite));
  const auto& model = source_.model;
  const auto* data = source_.data;
  fl::BatchGradient grad = [&model, data](const ModelParams& w, std::span<const std::size_t> batch, std::span<double> g) {
    return learn::loss_and_grad(model, w, *data, batch, g);
  };
  Rng rng(derive_seed(config_.seed, {static_cast<std::uint64_t>(satellite), static_cast<std::uint64_t>(base_index)}));
  auto d = fl::local_train(models_.at(static_cast<std::size_t>(base_index)), base_index, part, grad, config_.local, rng);
  return cache_.emplace(key, std::move(d.delta)).first->second;
}

double UtilitySampler::delta_f(std::span<const int> staleness, int i_start) {
  if (static_cast<int>(staleness.size()) != source_.num_satellites())
    throw std::invalid_argument("delta_f: staleness vector length != K");
  if (i_start < 0 || i_start >= static_cast<int>(models_.size()))
    throw std::out_of_range("delta_f: i_start outside the pretraining sequence");
  const auto& w = models_[static_cast<std::size_t>(i_start)];
  std::vector<fl::BufferEntry> buffer;
  for (std::size_t k = 0; k < staleness.size(); ++k) {
    const int s = staleness[k];
    if (s < 0) continue;
    if (s > i_start) throw std::out_of_range("delta_f: staleness reaches before w^0");
    const int base = i_start - s;
    buffer.push_back({{delta(static_cast<int>(k), base), base}, s, static_cast<int>(k)});
  }
  if (buffer.empty()) return 0.0;
  const auto updated = fl::aggregate(w, buffer, config_.alpha);
  return losses_[static_cast<std::size_t>(i_start)] - learn::mean_loss(source_.model, updated, *source_.data);
}

std::pair<std::vector<int>, int> UtilitySampler::draw(Rng& rng) const {
  std::uniform_int_distribution<int> entry(-1, config_.s_max);
  std::uniform_int_distribution<int> start(config_.s_max, config_.pretrain_rounds - 1);
  std::vector<int> s(static_cast<std::size_t>(source_.num_satellites()));
  if (config_.draw == DrawMode::Uniform) {
    for (auto& e : s) e = entry(rng);
  } else {
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    std::uniform_int_distribution<int> stale(0, config_.s_max);
    const double p = frac(rng);
    for (auto& e : s) e = frac(rng) < p ? stale(rng) : -1;
  }
  return {std::move(s), start(rng)};
}

std::vector<UtilitySample> generate_utility_samples(UtilitySampler& sampler, int count, Rng& rng) {
  if (count < 1) throw std::invalid_argument("generate_utility_samples: need at least one sample");
  std::vector<UtilitySample> out;
  out.reserve(static_cast<std::size_t>(count));
  const int s_max = sampler.config().s_max;
  for (int n = 0; n < count; ++n) {
    auto [s, i_start] = sampler.draw(rng);
    UtilitySample sample;
    sample.delta_f = sampler.delta_f(s, i_start);
    sample.i_start = i_start;
    sample.features = sched::featurize({s, 0}, sampler.losses()[static_cast<std::size_t>(i_start)], s_max);
    out.push_back(std::move(sample));
  }
  return out;
}

void save_samples_csv(std::span<const UtilitySample> samples, int s_max, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write samples " + path.string());
  out << "count_absent";
  for (int s = 0; s <= s_max; ++s) out << ",count_s" << s;
  out << ",training_status,delta_f\n";
  for (const auto& smp : samples) {
    for (std::size_t j = 0; j < smp.features.size(); ++j) out << (j ? "," : "") << fmt(smp.features[j]);
    out << ',' << fmt(smp.delta_f) << '\n';
  }
}

double UtilityRegressor::predict(std::span<const double> features) const { return forest_.predict(features); }

nlohmann::json UtilityRegressor::to_json() const {
  return {{"format", kFormatTag},
          {"version", kFormatVersion},
          {"s_max", s_max_},
          {"samples", sample_count_},
          {"holdout_mse", holdout_mse_},
          {"holdout_variance", holdout_variance_},
          {"target_variance", target_variance_},
          {"forest", forest_.to_json()}};
}

UtilityRegressor UtilityRegressor::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != kFormatTag) throw std::runtime_error("utility regressor: unrecognized artifact format");
  if (j.at("version").get<int>() != kFormatVersion)
    throw std::runtime_error("utility regressor: unsupported format version " + j.at("version").dump());
  UtilityRegressor r;
  r.s_max_ = j.at("s_max").get<int>();
  r.sample_count_ = j.at("samples").get<std::size_t>();
  r.holdout_mse_ = j.at("holdout_mse").get<double>();
  r.holdout_variance_ = j.at("holdout_variance").get<double>();
  r.target_variance_ = j.at("target_variance").get<double>();
  r.forest_ = forest::RegressionForest::from_json(j.at("forest"));
  if (r.forest_.n_features() != sched::feature_count(r.s_max_))
    throw std::runtime_error("utility regressor: feature count does not match s_max");
  return r;
}

void UtilityRegressor::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write regressor " + path.string());
  out << to_json().dump() << '\n';
}

UtilityRegressor UtilityRegressor::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open regressor " + path.string());
  return from_json(nlohmann::json::parse(in));
}

UtilityRegressor fit_utility_regressor(std::span<const UtilitySample> samples, int s_max,
                                       const RegressorParams& params, Rng& rng) {
  if (samples.size() < 20) throw std::invalid_argument("fit_utility_regressor: need at least 20 samples");
  const std::size_t p = sched::feature_count(s_max);
  for (const auto& s : samples)
    if (s.features.size() != p) throw std::invalid_argument("fit_utility_regressor: feature length does not match s_max");
  const bool degenerate = std::all_of(samples.begin(), samples.end(),
                                      [&](const UtilitySample& s) { return s.features == samples.front().features; });
  if (degenerate) throw std::invalid_argument("fit_utility_regressor: all samples share one feature vector");
  if (!(params.holdout_fraction > 0.0 && params.holdout_fraction < 1.0))
    throw std::invalid_argument("fit_utility_regressor: holdout fraction must be in (0, 1)");

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(params.holdout_fraction * static_cast<double>(samples.size())));
  const std::size_t n_train = samples.size() - n_hold;

  std::vector<double> X, y;
  X.reserve(n_train * p);
  for (std::size_t i = 0; i < n_train; ++i) {
    const auto& s = samples[order[i]];
    X.insert(X.end(), s.features.begin(), s.features.end());
    y.push_back(s.delta_f);
  }

  UtilityRegressor r;
  r.s_max_ = s_max;
  r.sample_count_ = samples.size();
  r.forest_ = forest::RegressionForest::fit(X, y, p, params.forest, rng);

  std::vector<double> hold_y, all_y;
  double sse = 0.0;
  for (std::size_t i = n_train; i < samples.size(); ++i) {
    const auto& s = samples[order[i]];
    const double e = r.forest_.predict(s.features) - s.delta_f;
    sse += e * e;
    hold_y.push_back(s.delta_f);
  }
  for (const auto& s : samples) all_y.push_back(s.delta_f);
  r.holdout_mse_ = sse / static_cast<double>(n_hold);
  r.holdout_variance_ = variance(hold_y);
  r.target_variance_ = variance(all_y);
  return r;
}

}  // namespace fedspace::utility

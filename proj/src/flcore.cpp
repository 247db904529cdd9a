#include "fedspace/flcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fedspace::fl {

void LocalTrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("local training: steps must be >= 1");
  if (batch < 1) throw std::invalid_argument("local training: batch must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("local training: lr must be positive");
}

GradientDelta local_train(const ModelParams& base, std::int64_t base_round,
                          std::span<const std::size_t> partition, const BatchGradient& grad_fn,
                          const LocalTrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (partition.empty()) throw std::invalid_argument("local_train: empty partition");

  ModelParams w = base;
  std::vector<double> grad(w.dim());
  std::vector<std::size_t> order(partition.begin(), partition.end());
  const auto batch = static_cast<std::size_t>(cfg.batch);
  const bool full_batch = batch >= order.size();
  std::size_t pos = order.size();  // forces a shuffle before the first batch

  for (int step = 0; step < cfg.steps; ++step) {
    std::span<const std::size_t> b;
    if (full_batch) {
      b = order;
    } else {
      if (pos + batch > order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        pos = 0;
      }
      b = std::span<const std::size_t>(order).subspan(pos, batch);
      pos += batch;
    }
    const double loss = grad_fn(w, b, grad);
    if (!std::isfinite(loss)) throw std::runtime_error("local_train: non-finite loss (learning rate too large?)");
    for (std::size_t j = 0; j < w.dim(); ++j) w.values[j] -= cfg.lr * grad[j];
  }

  GradientDelta out;
  out.base_round = base_round;
  out.delta.resize(w.dim());
  for (std::size_t j = 0; j < w.dim(); ++j) out.delta[j] = w.values[j] - base.values[j];
  return out;
}

double staleness_weight(int staleness, double alpha) {
  if (staleness < 0) throw std::invalid_argument("staleness_weight: negative staleness");
  if (!(alpha >= 0.0)) throw std::invalid_argument("staleness_weight: alpha must be >= 0");
  return std::pow(static_cast<double>(staleness) + 1.0, -alpha);
}

std::vector<double> aggregation_weights(std::span<const BufferEntry> buffer, double alpha) {
  std::vector<double> w;
  w.reserve(buffer.size());
  double total = 0.0;
  for (const auto& e : buffer) total += w.emplace_back(staleness_weight(e.staleness, alpha));
  for (auto& v : w) v /= total;
  return w;
}

ModelParams aggregate(const ModelParams& model, std::span<const BufferEntry> buffer, double alpha) {
  if (buffer.empty()) throw std::invalid_argument("aggregate: empty buffer");
  for (const auto& e : buffer)
    if (e.gradient.delta.size() != model.dim()) throw std::invalid_argument("aggregate: dimension mismatch");
  const auto weights = aggregation_weights(buffer, alpha);
  std::vector<double> step(model.dim(), 0.0);
  for (std::size_t k = 0; k < buffer.size(); ++k) {
    const auto& g = buffer[k].gradient.delta;
    for (std::size_t j = 0; j < step.size(); ++j) step[j] += weights[k] * g[j];
  }
  ModelParams out = model;
  for (std::size_t j = 0; j < step.size(); ++j) out.values[j] += step[j];
  return out;
}

GradientDelta LocalTrainer::train(const SatelliteState& sat, const ModelParams& base,
                                  std::int64_t base_round) const {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(sat.id), sat.trainings}));
  return local_train(base, base_round, sat.partition, grad_fn, config, rng);
}

ContactKind classify_contact(const SatelliteState& sat) noexcept {
  if (sat.pending) return ContactKind::Upload;
  return sat.base_round ? ContactKind::Idle : ContactKind::Cold;
}

std::optional<GradientDelta> take_upload(SatelliteState& sat) {
  std::optional<GradientDelta> out;
  out.swap(sat.pending);
  return out;
}

bool receive_broadcast(SatelliteState& sat, const ModelParams& model, std::int64_t round,
                       const LocalTrainer& trainer) {
  if (sat.base_round && round <= *sat.base_round) return false;
  sat.base_model = model;
  sat.base_round = round;
  sat.pending = trainer.train(sat, model, round);
  ++sat.trainings;
  return true;
}

ContactResult satellite_contact(SatelliteState sat, const ModelParams& server_model,
                                std::int64_t server_round, const LocalTrainer& trainer) {
  ContactResult r;
  r.kind = classify_contact(sat);
  r.upload = take_upload(sat);
  r.trained = receive_broadcast(sat, server_model, server_round, trainer);
  r.state = std::move(sat);
  return r;
}

StepRecord server_step(ServerState& server, std::span<const int> connected,
                       std::vector<SatelliteState>& sats, Scheduler& scheduler,
                       const LocalTrainer& trainer, const ServerStepOptions& options) {
  for (std::size_t j = 0; j < connected.size(); ++j) {
    if (connected[j] < 0 || static_cast<std::size_t>(connected[j]) >= sats.size())
      throw std::out_of_range("server_step: unknown satellite id " + std::to_string(connected[j]));
    if (j > 0 && connected[j] <= connected[j - 1])
      throw std::invalid_argument("server_step: connected set must be strictly increasing");
  }

  StepRecord rec;
  rec.time_index = server.time_index;
  scheduler.on_step_begin({server.time_index, connected, server, sats, static_cast<int>(sats.size()),
                           options.training_status});

  for (int k : connected) {
    auto& sat = sats[static_cast<std::size_t>(k)];
    switch (classify_contact(sat)) {
      case ContactKind::Upload: {
        auto g = take_upload(sat);
        const auto s = server.round - g->base_round;
        if (s < 0) throw std::logic_error("server_step: delta based on a future round");
        server.buffer.push_back({std::move(*g), static_cast<int>(s), k});
        const auto pos = std::lower_bound(server.contributors.begin(), server.contributors.end(), k);
        if (pos == server.contributors.end() || *pos != k) server.contributors.insert(pos, k);
        rec.uploads.push_back({k, static_cast<int>(s)});
        break;
      }
      case ContactKind::Idle:
        rec.idle.push_back(k);
        break;
      case ContactKind::Cold:
        rec.cold.push_back(k);
        break;
    }
  }

  const SchedulerContext ctx{server.time_index, connected, server, sats,
                             static_cast<int>(sats.size()), options.training_status};
  rec.decision = scheduler.decide(ctx);
  if (rec.decision && !server.buffer.empty()) {
    server.model = aggregate(server.model, server.buffer, options.alpha);
    ++server.round;
    for (const auto& e : server.buffer) rec.aggregated_entries.push_back({e.satellite_id, e.staleness});
    server.buffer.clear();
    server.contributors.clear();
    rec.aggregated = true;
  }

  for (int k : connected) receive_broadcast(sats[static_cast<std::size_t>(k)], server.model, server.round, trainer);

  rec.round_after = server.round;
  ++server.time_index;
  return rec;
}

}  // namespace fedspace::fl

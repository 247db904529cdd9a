#pragma once

// Satellite/ground-station federated learning state machines.
//
// One time index of the ground-station loop runs, in order:
//   1. every connected satellite uploads its pending delta (if any) into the buffer,
//      tagged with staleness = current round - the delta's base round;
//   2. the scheduler decides whether to aggregate;
//   3. on aggregation with a non-empty buffer the model moves by the
//      staleness-weighted mean of the buffered deltas and the round advances;
//   4. connected satellites that see a round newer than their base download it
//      and train; the result becomes pending until their next contact.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedspace/model.hpp"
#include "fedspace/rng.hpp"

namespace fedspace::fl {

struct GradientDelta {
  std::vector<double> delta;  // w^E - w^0
  std::int64_t base_round = 0;

  bool operator==(const GradientDelta&) const = default;
};

struct BufferEntry {
  GradientDelta gradient;
  int staleness = 0;
  int satellite_id = -1;
};

struct LocalTrainConfig {
  int steps = 10;   // E
  int batch = 16;   // B
  double lr = 0.1;  // eta

  void validate() const;
};

// Loss and gradient of the training objective on a mini-batch of partition
// sample indices. Writes the gradient into `grad` and returns the loss.
using BatchGradient =
    std::function<double(const ModelParams& w, std::span<const std::size_t> batch, std::span<double> grad)>;

/// Runs `cfg.steps` mini-batch SGD steps from `base` over `partition`.
/// Batches are drawn without replacement from a shuffled pass of the
/// partition; a new shuffle starts when fewer than `cfg.batch` indices remain.
/// A batch at least as large as the partition means full-batch steps.
GradientDelta local_train(const ModelParams& base, std::int64_t base_round,
                          std::span<const std::size_t> partition, const BatchGradient& grad_fn,
                          const LocalTrainConfig& cfg, Rng& rng);

// c_alpha(s) = (s + 1)^(-alpha)
double staleness_weight(int staleness, double alpha);

// Normalized weights c(s_k) / sum_j c(s_j), one per buffer entry.
std::vector<double> aggregation_weights(std::span<const BufferEntry> buffer, double alpha);

// model + sum_k (c(s_k)/C) g_k. Throws on an empty buffer or a dimension mismatch.
ModelParams aggregate(const ModelParams& model, std::span<const BufferEntry> buffer, double alpha);

struct SatelliteState {
  int id = 0;
  std::optional<ModelParams> base_model;
  std::optional<std::int64_t> base_round;
  std::optional<GradientDelta> pending;
  std::vector<std::size_t> partition;
  std::uint64_t trainings = 0;  // number of local trainings run so far
};

// Binds a satellite to its local training run. The rng stream of each run is
// derived from (seed, satellite id, training count).
struct LocalTrainer {
  BatchGradient grad_fn;
  LocalTrainConfig config;
  std::uint64_t seed = 0;

  GradientDelta train(const SatelliteState& sat, const ModelParams& base, std::int64_t base_round) const;
};

enum class ContactKind { Upload, Idle, Cold };

ContactKind classify_contact(const SatelliteState& sat) noexcept;

// First half of a contact: hands over the pending delta, if any.
std::optional<GradientDelta> take_upload(SatelliteState& sat);

// Second half of a contact: adopts the broadcast model and trains iff it is
// newer than the satellite's base. Returns whether training ran.
bool receive_broadcast(SatelliteState& sat, const ModelParams& model, std::int64_t round,
                       const LocalTrainer& trainer);

struct ContactResult {
  std::optional<GradientDelta> upload;
  SatelliteState state;
  ContactKind kind = ContactKind::Cold;
  bool trained = false;
};

// Whole contact without a server decision in between (upload, then download).
ContactResult satellite_contact(SatelliteState sat, const ModelParams& server_model,
                                std::int64_t server_round, const LocalTrainer& trainer);

struct ServerState {
  ModelParams model;
  std::int64_t round = 0;
  std::vector<BufferEntry> buffer;
  std::vector<int> contributors;  // sorted satellite ids present in the buffer
  std::int64_t time_index = 0;
};

struct SchedulerContext {
  std::int64_t time_index = 0;
  std::span<const int> connected;
  const ServerState& server;
  std::span<const SatelliteState> satellites;
  int num_satellites = 0;
  double training_status = 0.0;
};

/// Aggregation policy queried once per time index.
class Scheduler {
 public:
  virtual ~Scheduler() = default;
  // Called at the start of each time index, before any upload is received.
  virtual void on_step_begin(const SchedulerContext&) {}
  virtual bool decide(const SchedulerContext& ctx) = 0;
  virtual std::string name() const = 0;
};

struct UploadRecord {
  int satellite_id = -1;
  int staleness = 0;
};

struct StepRecord {
  std::int64_t time_index = 0;
  bool decision = false;    // a^i as emitted by the scheduler
  bool aggregated = false;  // decision with a non-empty buffer
  std::int64_t round_after = 0;
  std::vector<UploadRecord> uploads;
  std::vector<int> idle;  // contacts with a base model but nothing to upload
  std::vector<int> cold;  // first-ever contacts
  std::vector<UploadRecord> aggregated_entries;  // buffer contents consumed by the aggregation
};

struct ServerStepOptions {
  double alpha = 0.5;
  double training_status = 0.0;
};

/// One time index of the ground-station loop. `connected` must be strictly
/// increasing satellite ids in [0, sats.size()).
StepRecord server_step(ServerState& server, std::span<const int> connected,
                       std::vector<SatelliteState>& sats, Scheduler& scheduler,
                       const LocalTrainer& trainer, const ServerStepOptions& options);

}  // namespace fedspace::fl

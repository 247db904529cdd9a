#include "fedspace/learntask.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fedspace::learn {
namespace {

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

int Dataset::num_zones() const {
  if (zones.empty()) return 0;
  return *std::max_element(zones.begin(), zones.end()) + 1;
}

void Dataset::validate() const {
  if (dim < 1 || classes < 1) throw std::invalid_argument("dataset: dim and classes must be >= 1");
  if (labels.empty()) throw std::invalid_argument("dataset: no samples");
  if (features.size() != labels.size() * static_cast<std::size_t>(dim))
    throw std::invalid_argument("dataset: feature matrix shape mismatch");
  if (!zones.empty() && zones.size() != labels.size())
    throw std::invalid_argument("dataset: zone column length mismatch");
  for (int y : labels)
    if (y < 0 || y >= classes) throw std::invalid_argument("dataset: label out of range");
  for (int z : zones)
    if (z < 0) throw std::invalid_argument("dataset: negative zone id");
  for (double v : features)
    if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite feature");
}

SyntheticTask make_synthetic_task(int dim, int classes, double separation, int zones,
                                  double zone_concentration, Rng& rng, double anisotropy) {
  if (dim < 1 || classes < 2 || zones < 1)
    throw std::invalid_argument("synthetic task: need dim >= 1, classes >= 2, zones >= 1");
  if (!(separation >= 0.0) || !(zone_concentration > 0.0))
    throw std::invalid_argument("synthetic task: separation must be >= 0, concentration > 0");
  if (!(anisotropy >= 1.0) || !std::isfinite(anisotropy))
    throw std::invalid_argument("synthetic task: anisotropy must be >= 1");

  SyntheticTask task;
  task.dim = dim;
  task.classes = classes;
  task.zones = zones;
  task.separation = separation;

  std::normal_distribution<double> gauss(0.0, 1.0);
  const double scale = separation / std::sqrt(static_cast<double>(dim));
  task.class_means.resize(static_cast<std::size_t>(classes * dim));
  for (auto& m : task.class_means) m = scale * gauss(rng);

  std::gamma_distribution<double> gamma(zone_concentration, 1.0);
  task.zone_mixture.assign(static_cast<std::size_t>(zones), std::vector<double>(static_cast<std::size_t>(classes)));
  for (auto& mix : task.zone_mixture) {
    double total = 0.0;
    for (auto& p : mix) total += (p = gamma(rng) + 1e-12);
    for (auto& p : mix) p /= total;
  }

  task.noise_scale.resize(static_cast<std::size_t>(dim));
  for (int j = 0; j < dim; ++j) {
    const double u = dim == 1 ? 0.5 : static_cast<double>(j) / (dim - 1);
    task.noise_scale[static_cast<std::size_t>(j)] = std::pow(anisotropy, u - 0.5);
  }
  return task;
}

Dataset sample_dataset(const SyntheticTask& task, std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_dataset: n must be >= 1");
  if (task.noise_scale.size() != static_cast<std::size_t>(task.dim))
    throw std::invalid_argument("sample_dataset: noise scale length != dim");
  Dataset d;
  d.dim = task.dim;
  d.classes = task.classes;
  d.features.resize(n * static_cast<std::size_t>(task.dim));
  d.labels.resize(n);
  d.zones.resize(n);

  std::vector<std::discrete_distribution<int>> label_dist;
  for (const auto& mix : task.zone_mixture) label_dist.emplace_back(mix.begin(), mix.end());
  std::uniform_int_distribution<int> zone_dist(0, task.zones - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (std::size_t i = 0; i < n; ++i) {
    const int z = zone_dist(rng);
    const int y = label_dist[static_cast<std::size_t>(z)](rng);
    d.zones[i] = z;
    d.labels[i] = y;
    const double* mean = task.class_means.data() + static_cast<std::size_t>(y * task.dim);
    double* x = d.features.data() + i * static_cast<std::size_t>(task.dim);
    for (int j = 0; j < task.dim; ++j) x[j] = mean[j] + task.noise_scale[static_cast<std::size_t>(j)] * gauss(rng);
  }
  return d;
}

Dataset generate_synthetic(std::size_t n, int dim, int classes, double separation, int zones, Rng& rng) {
  if (n < static_cast<std::size_t>(std::max(classes, 1)))
    throw std::invalid_argument("generate_synthetic: need n >= classes");
  const auto task = make_synthetic_task(dim, classes, separation, zones, 0.5, rng);
  return sample_dataset(task, n, rng);
}

std::vector<std::vector<std::size_t>> Partitioning::members() const {
  std::vector<std::vector<std::size_t>> out(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) out[k].reserve(counts[k]);
  for (std::size_t i = 0; i < assignment.size(); ++i)
    out[static_cast<std::size_t>(assignment[i])].push_back(i);
  return out;
}

void Partitioning::validate(std::size_t n_samples) const {
  if (assignment.size() != n_samples) throw std::invalid_argument("partition: assignment size mismatch");
  std::vector<std::size_t> c(counts.size(), 0);
  for (int k : assignment) {
    if (k < 0 || static_cast<std::size_t>(k) >= counts.size())
      throw std::invalid_argument("partition: satellite id out of range");
    ++c[static_cast<std::size_t>(k)];
  }
  if (c != counts) throw std::invalid_argument("partition: counts inconsistent with assignment");
}

Partitioning partition_iid(const Dataset& data, int num_satellites, Rng& rng) {
  if (num_satellites < 1) throw std::invalid_argument("partition_iid: need at least one satellite");
  if (static_cast<std::size_t>(num_satellites) > data.size())
    throw std::invalid_argument("partition_iid: more satellites than samples");
  std::vector<std::size_t> perm(data.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  Partitioning p;
  p.assignment.resize(data.size());
  p.counts.assign(static_cast<std::size_t>(num_satellites), 0);
  for (std::size_t j = 0; j < perm.size(); ++j) {
    const auto k = j % static_cast<std::size_t>(num_satellites);
    p.assignment[perm[j]] = static_cast<int>(k);
    ++p.counts[k];
  }
  return p;
}

Partitioning partition_noniid_by_visits(const Dataset& data,
                                        const std::vector<std::vector<int>>& visits, Rng& rng) {
  if (visits.empty()) throw std::invalid_argument("partition_noniid: empty visit table");
  if (data.zones.size() != data.size()) throw std::invalid_argument("partition_noniid: dataset has no zones");
  const std::size_t n_zones = visits.front().size();
  for (const auto& row : visits) {
    if (row.size() != n_zones) throw std::invalid_argument("partition_noniid: ragged visit table");
    for (int v : row)
      if (v < 0) throw std::invalid_argument("partition_noniid: negative visit count");
  }

  std::vector<std::discrete_distribution<int>> pick(n_zones);
  std::vector<bool> visited(n_zones, false);
  for (std::size_t z = 0; z < n_zones; ++z) {
    std::vector<double> w(visits.size());
    for (std::size_t k = 0; k < visits.size(); ++k) {
      w[k] = visits[k][z];
      if (w[k] > 0) visited[z] = true;
    }
    if (visited[z]) pick[z] = std::discrete_distribution<int>(w.begin(), w.end());
  }

  Partitioning p;
  p.assignment.resize(data.size());
  p.counts.assign(visits.size(), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto z = static_cast<std::size_t>(data.zones[i]);
    if (z >= n_zones) throw std::invalid_argument("partition_noniid: sample zone outside visit table");
    if (!visited[z])
      throw std::invalid_argument("partition_noniid: zone " + std::to_string(z) + " has no visiting satellite");
    const int k = pick[z](rng);
    p.assignment[i] = k;
    ++p.counts[static_cast<std::size_t>(k)];
  }
  return p;
}

void LogisticModel::check(const ModelParams& w, const Dataset& data) const {
  if (w.dim() != num_params()) throw std::invalid_argument("logistic: parameter dimension mismatch");
  if (data.dim != dim || data.classes != classes) throw std::invalid_argument("logistic: dataset shape mismatch");
}

namespace {

// logits -> in-place softmax; returns log-sum-exp.
double softmax_inplace(std::span<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (auto& v : z) s += (v = std::exp(v - mx));
  for (auto& v : z) v /= s;
  return mx + std::log(s);
}

void logits(const LogisticModel& m, const ModelParams& w, std::span<const double> x, std::span<double> out) {
  const double* W = w.values.data();
  const double* b = W + static_cast<std::size_t>(m.classes * m.dim);
  for (int c = 0; c < m.classes; ++c) {
    const double* wc = W + static_cast<std::size_t>(c * m.dim);
    double acc = b[c];
    for (int j = 0; j < m.dim; ++j) acc += wc[j] * x[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(c)] = acc;
  }
}

double l2_term(const LogisticModel& m, const ModelParams& w) {
  if (m.l2 == 0.0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(m.classes * m.dim); ++i) s += w.values[i] * w.values[i];
  return 0.5 * m.l2 * s;
}

}  // namespace

double loss_and_grad(const LogisticModel& model, const ModelParams& w, const Dataset& data,
                     std::span<const std::size_t> batch, std::span<double> grad) {
  model.check(w, data);
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  if (grad.size() != model.num_params()) throw std::invalid_argument("loss_and_grad: gradient buffer size mismatch");
  std::fill(grad.begin(), grad.end(), 0.0);

  const auto L = static_cast<std::size_t>(model.classes);
  const auto D = static_cast<std::size_t>(model.dim);
  std::vector<double> p(L);
  double loss = 0.0;
  double* gb = grad.data() + L * D;
  for (std::size_t idx : batch) {
    if (idx >= data.size()) throw std::out_of_range("loss_and_grad: batch index out of range");
    const auto x = data.row(idx);
    const auto y = static_cast<std::size_t>(data.labels[idx]);
    logits(model, w, x, p);
    const double zy = p[y];
    loss += softmax_inplace(p) - zy;
    for (std::size_t c = 0; c < L; ++c) {
      const double r = p[c] - (c == y ? 1.0 : 0.0);
      double* gc = grad.data() + c * D;
      for (std::size_t j = 0; j < D; ++j) gc[j] += r * x[j];
      gb[c] += r;
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& g : grad) g *= inv;
  if (model.l2 != 0.0)
    for (std::size_t i = 0; i < L * D; ++i) grad[i] += model.l2 * w.values[i];
  return loss * inv + l2_term(model, w);
}

double mean_loss(const LogisticModel& model, const ModelParams& w, const Dataset& data,
                 std::span<const std::size_t> batch) {
  model.check(w, data);
  if (batch.empty()) throw std::invalid_argument("mean_loss: empty batch");
  std::vector<double> p(static_cast<std::size_t>(model.classes));
  double loss = 0.0;
  for (std::size_t idx : batch) {
    logits(model, w, data.row(idx), p);
    const double zy = p[static_cast<std::size_t>(data.labels[idx])];
    loss += softmax_inplace(p) - zy;
  }
  return loss / static_cast<double>(batch.size()) + l2_term(model, w);
}

double mean_loss(const LogisticModel& model, const ModelParams& w, const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return mean_loss(model, w, data, all);
}

int predict(const LogisticModel& model, const ModelParams& w, std::span<const double> x) {
  std::vector<double> z(static_cast<std::size_t>(model.classes));
  logits(model, w, x, z);
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

double evaluate(const LogisticModel& model, const ModelParams& w, const Dataset& validation) {
  model.check(w, validation);
  if (validation.size() == 0) throw std::invalid_argument("evaluate: empty validation set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < validation.size(); ++i)
    if (predict(model, w, validation.row(i)) == validation.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(validation.size());
}

std::vector<double> per_class_recall(const LogisticModel& model, const ModelParams& w,
                                     const Dataset& validation) {
  model.check(w, validation);
  std::vector<double> hit(static_cast<std::size_t>(model.classes), 0.0), total(hit.size(), 0.0);
  for (std::size_t i = 0; i < validation.size(); ++i) {
    const auto y = static_cast<std::size_t>(validation.labels[i]);
    total[y] += 1.0;
    if (predict(model, w, validation.row(i)) == validation.labels[i]) hit[y] += 1.0;
  }
  for (std::size_t c = 0; c < hit.size(); ++c) hit[c] = total[c] > 0 ? hit[c] / total[c] : 0.0;
  return hit;
}

void save_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  for (int j = 0; j < data.dim; ++j) out << 'f' << j << ',';
  out << "label,zone\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) out << fmt(v) << ',';
    out << data.labels[i] << ',' << (data.zones.empty() ? 0 : data.zones[i]) << '\n';
  }
}

Dataset load_dataset_csv(const std::filesystem::path& path, int classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset: missing header");
  const auto cols = std::count(line.begin(), line.end(), ',') + 1;
  if (cols < 3) throw std::runtime_error("dataset: header must have feature columns, label, zone");
  Dataset d;
  d.dim = static_cast<int>(cols - 2);
  d.classes = classes;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (static_cast<long>(cells.size()) != cols)
      throw std::runtime_error("dataset: wrong column count on line " + std::to_string(lineno));
    for (int j = 0; j < d.dim; ++j) d.features.push_back(std::stod(cells[static_cast<std::size_t>(j)]));
    d.labels.push_back(std::stoi(cells[static_cast<std::size_t>(d.dim)]));
    d.zones.push_back(std::stoi(cells[static_cast<std::size_t>(d.dim + 1)]));
  }
  d.validate();
  return d;
}

void save_partition_csv(const Partitioning& part, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write partition " + path.string());
  out << "sample_index,satellite_id\n";
  for (std::size_t i = 0; i < part.assignment.size(); ++i) out << i << ',' << part.assignment[i] << '\n';
}

}  // namespace fedspace::learn

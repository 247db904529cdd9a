#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "fedspace/learntask.hpp"

using namespace fedspace;
using namespace fedspace::learn;

namespace {

std::vector<std::size_t> all_indices(const Dataset& d) {
  std::vector<std::size_t> v(d.size());
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

Dataset tiny_separable() {
  Dataset d;
  d.dim = 2;
  d.classes = 2;
  d.features = {2, 0, 3, 1, 2.5, -1, -2, 0, -3, 1, -2.5, -1};
  d.labels = {0, 0, 0, 1, 1, 1};
  return d;
}

}  // namespace

TEST_CASE("zero weights give loss ln(classes)") {
  Rng rng(3);
  const auto d = generate_synthetic(200, 5, 7, 1.0, 3, rng);
  const LogisticModel m{5, 7, 0.0};
  CHECK(mean_loss(m, m.zeros(), d) == doctest::Approx(std::log(7.0)).epsilon(1e-14));
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(5);
  const auto d = generate_synthetic(64, 6, 4, 2.0, 2, rng);
  const LogisticModel m{6, 4, 1e-3};
  std::normal_distribution<double> g(0.0, 0.5);
  ModelParams w(m.num_params());
  for (auto& v : w.values) v = g(rng);
  const auto batch = all_indices(d);
  std::vector<double> grad(m.num_params());
  loss_and_grad(m, w, d, batch, grad);
  const double h = 1e-6;
  for (std::size_t i = 0; i < w.dim(); ++i) {
    auto wp = w, wm = w;
    wp.values[i] += h;
    wm.values[i] -= h;
    const double fd = (mean_loss(m, wp, d, batch) - mean_loss(m, wm, d, batch)) / (2 * h);
    CHECK(std::abs(fd - grad[i]) <= 1e-6 * std::max(1.0, std::abs(grad[i])));
  }
}

TEST_CASE("gradient descent separates a separable set") {
  const auto d = tiny_separable();
  const LogisticModel m{2, 2, 0.0};
  auto w = m.zeros();
  std::vector<double> grad(m.num_params());
  const auto batch = all_indices(d);
  double prev = mean_loss(m, w, d);
  for (int it = 0; it < 200; ++it) {
    loss_and_grad(m, w, d, batch, grad);
    for (std::size_t i = 0; i < w.dim(); ++i) w.values[i] -= 0.5 * grad[i];
    const double now = mean_loss(m, w, d);
    CHECK(now <= prev + 1e-15);
    prev = now;
  }
  CHECK(evaluate(m, w, d) == 1.0);
  const auto recall = per_class_recall(m, w, d);
  CHECK(recall == std::vector<double>{1.0, 1.0});
}

TEST_CASE("per-class recall of a constant predictor") {
  Rng rng(9);
  const auto d = generate_synthetic(500, 4, 5, 2.0, 1, rng);
  const LogisticModel m{4, 5, 0.0};
  const auto r = per_class_recall(m, m.zeros(), d);
  CHECK(r[0] == 1.0);
  for (std::size_t c = 1; c < r.size(); ++c) CHECK(r[c] == 0.0);
}

TEST_CASE("loss and gradient argument errors") {
  const auto d = tiny_separable();
  const LogisticModel m{2, 2, 0.0};
  std::vector<double> grad(m.num_params());
  std::vector<std::size_t> empty;
  CHECK_THROWS(loss_and_grad(m, m.zeros(), d, empty, grad));
  std::vector<std::size_t> bad{99};
  CHECK_THROWS(loss_and_grad(m, m.zeros(), d, bad, grad));
  std::vector<double> short_grad(2);
  CHECK_THROWS(loss_and_grad(m, m.zeros(), d, all_indices(d), short_grad));
  CHECK_THROWS(mean_loss(m, ModelParams(3), d));
  CHECK_THROWS(mean_loss(LogisticModel{3, 2, 0.0}, LogisticModel{3, 2, 0.0}.zeros(), d));
}

TEST_CASE("synthetic data is deterministic per seed") {
  Rng a(17), b(17), c(18);
  const auto da = generate_synthetic(300, 8, 4, 3.0, 5, a);
  const auto db = generate_synthetic(300, 8, 4, 3.0, 5, b);
  const auto dc = generate_synthetic(300, 8, 4, 3.0, 5, c);
  CHECK(da == db);
  CHECK_FALSE(da == dc);
  CHECK_NOTHROW(da.validate());
}

TEST_CASE("zone and label are dependent") {
  Rng rng(21);
  const int Z = 10, L = 10;
  const auto d = generate_synthetic(20000, 4, L, 3.0, Z, rng);
  std::vector<double> table(static_cast<std::size_t>(Z * L), 0.0), rows(Z, 0.0), cols(L, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    table[static_cast<std::size_t>(d.zones[i] * L + d.labels[i])] += 1;
    rows[static_cast<std::size_t>(d.zones[i])] += 1;
    cols[static_cast<std::size_t>(d.labels[i])] += 1;
  }
  const double n = static_cast<double>(d.size());
  double chi2 = 0.0;
  for (int z = 0; z < Z; ++z)
    for (int y = 0; y < L; ++y) {
      const double e = rows[z] * cols[y] / n;
      if (e > 0) chi2 += std::pow(table[static_cast<std::size_t>(z * L + y)] - e, 2) / e;
    }
  const boost::math::chi_squared dist((Z - 1) * (L - 1));
  CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) < 1e-6);
}

TEST_CASE("anisotropy spreads the noise scale") {
  Rng rng(1);
  const auto t = make_synthetic_task(5, 3, 1.0, 2, 0.5, rng, 100.0);
  REQUIRE(t.noise_scale.size() == 5);
  CHECK(t.noise_scale.front() == doctest::Approx(0.1));
  CHECK(t.noise_scale.back() == doctest::Approx(10.0));
  CHECK(t.noise_scale[2] == doctest::Approx(1.0));
  Rng r2(1);
  const auto iso = make_synthetic_task(5, 3, 1.0, 2, 0.5, r2);
  for (double s : iso.noise_scale) CHECK(s == 1.0);
  CHECK_THROWS(make_synthetic_task(5, 3, 1.0, 2, 0.5, r2, 0.5));
  CHECK_THROWS(make_synthetic_task(5, 1, 1.0, 2, 0.5, r2));
  CHECK_THROWS(make_synthetic_task(5, 3, 1.0, 2, 0.0, r2));
}

TEST_CASE("iid partition is balanced") {
  Rng rng(2);
  const auto d = generate_synthetic(1000, 3, 3, 1.0, 1, rng);
  const auto p = partition_iid(d, 10, rng);
  CHECK_NOTHROW(p.validate(d.size()));
  for (auto c : p.counts) CHECK(c == 100);

  const auto one = partition_iid(d, 1, rng);
  CHECK(one.counts == std::vector<std::size_t>{1000});
  const auto each = partition_iid(d, 1000, rng);
  for (auto c : each.counts) CHECK(c == 1);
  CHECK_THROWS(partition_iid(d, 1001, rng));
  CHECK_THROWS(partition_iid(d, 0, rng));
}

TEST_CASE("non-iid partition follows visit frequencies") {
  Rng rng(4);
  auto d = generate_synthetic(20000, 2, 3, 1.0, 1, rng);
  const auto p = partition_noniid_by_visits(d, {{3}, {1}}, rng);
  CHECK_NOTHROW(p.validate(d.size()));
  CHECK(static_cast<double>(p.counts[0]) / 20000.0 == doctest::Approx(0.75).epsilon(0.02 / 0.75));

  const auto solo = partition_noniid_by_visits(d, {{0}, {5}, {0}}, rng);
  CHECK(solo.counts == std::vector<std::size_t>{0, 20000, 0});

  Rng r2(4);
  auto d2 = generate_synthetic(500, 2, 3, 1.0, 2, r2);
  CHECK_THROWS_WITH_AS(partition_noniid_by_visits(d2, {{1, 0}, {2, 0}}, r2), doctest::Contains("no visiting"),
                       std::invalid_argument);
  CHECK_THROWS(partition_noniid_by_visits(d2, {{1, 1}, {1}}, r2));
  CHECK_THROWS(partition_noniid_by_visits(d2, {{1, -1}}, r2));
  CHECK_THROWS(partition_noniid_by_visits(d2, {}, r2));
  d2.zones.clear();
  CHECK_THROWS(partition_noniid_by_visits(d2, {{1, 1}}, r2));
}

TEST_CASE("partition members and validation") {
  Partitioning p{{1, 0, 1}, {1, 2}};
  CHECK_NOTHROW(p.validate(3));
  const auto mem = p.members();
  CHECK(mem[0] == std::vector<std::size_t>{1});
  CHECK(mem[1] == std::vector<std::size_t>{0, 2});
  CHECK_THROWS(p.validate(4));
  Partitioning bad{{1, 0, 1}, {2, 1}};
  CHECK_THROWS(bad.validate(3));
}

TEST_CASE("dataset csv round trip") {
  Rng rng(6);
  const auto d = generate_synthetic(50, 3, 4, 1.0, 2, rng);
  const auto path = std::filesystem::temp_directory_path() / "fedspace_dataset.csv";
  save_dataset_csv(d, path);
  const auto back = load_dataset_csv(path, 4);
  std::filesystem::remove(path);
  CHECK(back == d);
}

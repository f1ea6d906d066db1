#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "faconv/harness.hpp"

using namespace faconv;

namespace {

SyntheticSpec small_data() {
  SyntheticSpec s;
  s.T = 24;
  s.H = s.W = 8;
  s.C = 2;
  s.regimes = 2;
  s.regimeLength = 12;
  return s;
}

HarnessConfig small_config() {
  HarnessConfig c;
  c.data = small_data();
  c.model.C = 2;
  c.model.F = 8;
  c.model.Cb = 4;
  c.model.subspaceDim = 4;
  c.model.seRatio = 2;
  c.train.steps = 8;
  c.train.window = 6;
  c.k = 2;
  c.restarts = 3;
  c.seeds = 2;
  return c;
}

Tensor4D rows_to_matrix(const nlohmann::json& rows) {
  const std::size_t n = rows.size(), d = rows.at(0).size();
  auto X = Tensor4D::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) X.at(i, j) = rows.at(i).at(j).get<double>();
  return X;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic data

TEST(Synthetic, DeterministicForASeed) {
  auto s = small_data();
  s.seed = 7;
  const auto a = generate_synthetic_sequence(s), b = generate_synthetic_sequence(s);
  ASSERT_EQ(a.frames.size(), 24u);
  for (std::size_t t = 0; t < a.frames.size(); ++t) EXPECT_EQ(a.frames[t], b.frames[t]);
  EXPECT_EQ(a.labels, b.labels);
  s.seed = 8;
  EXPECT_NE(generate_synthetic_sequence(s).frames[0], a.frames[0]);
}

TEST(Synthetic, LabelsFollowRegimeBlocks) {
  const auto d = generate_synthetic_sequence(small_data());
  for (std::size_t t = 0; t < 24; ++t) EXPECT_EQ(d.labels[t], t / 12);
  EXPECT_EQ(d.siteA.size(), 2u);
  EXPECT_EQ(d.frames[0].shape(), (Shape{1, 8, 8, 2}));
}

TEST(Synthetic, SeasonalChannelIsPeriodicWithoutNoiseOrMotion) {
  SyntheticSpec s;
  s.T = s.regimeLength = 48;
  s.regimes = 1;
  s.H = s.W = 6;
  s.noiseStd = 0.0;
  s.blobSpeed = 0.0;
  const auto d = generate_synthetic_sequence(s);
  for (std::size_t t = 0; t + 24 < 48; ++t)
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(d.frames[t](0, i, j, 0), d.frames[t + 24](0, i, j, 0), 1e-12);
}

TEST(Synthetic, UnitGainGivesPerfectTeleconnection) {
  SyntheticSpec s;
  s.T = s.regimeLength = 64;
  s.regimes = 1;
  s.noiseStd = 0.0;
  s.teleconnectionGain = 1.0;
  const auto d = generate_synthetic_sequence(s);
  const auto [ar, ac] = d.siteA[0];
  const auto [br, bc] = d.siteB[0];
  std::vector<double> a, b;
  for (const auto& f : d.frames) {
    a.push_back(f(0, ar, ac, s.C - 1));
    b.push_back(f(0, br, bc, s.C - 1));
  }
  EXPECT_NEAR(pearson(a, b), 1.0, 1e-12);
}

TEST(Synthetic, ValidationAndJson) {
  auto s = small_data();
  s.T = 25;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_data();
  s.C = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_data();
  s.noiseStd = -0.1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_data();
  s.regimes = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  const nlohmann::json j = small_data();
  EXPECT_EQ(j.get<SyntheticSpec>().T, 24u);
  auto bad = j;
  bad["wind"] = 1;
  EXPECT_THROW(bad.get<SyntheticSpec>(), ConfigError);
}

// ---------------------------------------------------------------------------
// k-means

TEST(KMeans, OneDimensionalExample) {
  const auto X = Tensor4D::matrix(4, 1, {0.0, 0.1, 10.0, 10.1});
  const auto r = kmeans_cluster(X, {2, 1, 5});
  std::vector<double> c{r.centroids.at(0, 0), r.centroids.at(1, 0)};
  std::sort(c.begin(), c.end());
  EXPECT_NEAR(c[0], 0.05, 1e-12);
  EXPECT_NEAR(c[1], 10.05, 1e-12);
  EXPECT_EQ(r.labels[0], r.labels[1]);
  EXPECT_NE(r.labels[1], r.labels[2]);
}

TEST(KMeans, KEqualsNGivesZeroWcss) {
  std::mt19937_64 rng(3);
  auto X = random_uniform({1, 1, 6, 3}, -1.0, 1.0, rng);
  EXPECT_NEAR(kmeans_cluster(X, {6, 1, 3}).wcss, 0.0, 1e-24);
}

TEST(KMeans, DuplicatedDataKeepsCentroids) {
  std::mt19937_64 rng(4);
  auto X = random_uniform({1, 1, 10, 2}, -1.0, 1.0, rng);
  for (std::size_t i = 0; i < 5; ++i) X.at(i, 0) += 8.0;
  auto XX = Tensor4D::matrix(20, 2);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t d = 0; d < 2; ++d) XX.at(i, d) = X.at(i % 10, d);
  auto sorted = [](const Tensor4D& c) {
    std::vector<std::pair<double, double>> v;
    for (std::size_t i = 0; i < c.rows(); ++i) v.emplace_back(c.at(i, 0), c.at(i, 1));
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto a = sorted(kmeans_cluster(X, {2, 1, 5}).centroids), b = sorted(kmeans_cluster(XX, {2, 1, 5}).centroids);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(a[i].first, b[i].first, 1e-12);
    EXPECT_NEAR(a[i].second, b[i].second, 1e-12);
  }
}

TEST(KMeans, ErrorsAndDeterminism) {
  const auto X = Tensor4D::matrix(3, 1, {0.0, 1.0, 2.0});
  EXPECT_THROW(kmeans_cluster(X, {4, 1, 1}), ArgumentError);
  EXPECT_THROW(kmeans_cluster(X, {0, 1, 1}), ArgumentError);
  std::mt19937_64 rng(5);
  auto Y = random_uniform({1, 1, 30, 4}, -1.0, 1.0, rng);
  EXPECT_EQ(kmeans_cluster(Y, {4, 9, 4}).labels, kmeans_cluster(Y, {4, 9, 4}).labels);
}

// ---------------------------------------------------------------------------
// Metrics

TEST(Metrics, MatchReferenceFixtures) {
  std::ifstream in(std::string(FACONV_FIXTURE_DIR) + "/metric_fixtures.json");
  ASSERT_TRUE(in) << "missing metric fixtures";
  const auto doc = nlohmann::json::parse(in);
  ASSERT_GE(doc.at("cases").size(), 6u);
  for (const auto& c : doc.at("cases")) {
    const auto X = rows_to_matrix(c.at("points"));
    const auto labels = c.at("labels").get<std::vector<std::size_t>>();
    const auto pred = Tensor4D::vector(c.at("predicted").get<std::vector<double>>());
    const auto target = Tensor4D::vector(c.at("target").get<std::vector<double>>());
    const auto r = clustering_metrics(X, labels, {pred}, {target});
    const auto& e = c.at("expected");
    EXPECT_NEAR(r.silhouette, e.at("silhouette").get<double>(), 1e-9);
    EXPECT_NEAR(r.daviesBouldin, e.at("davies_bouldin").get<double>(), 1e-9);
    EXPECT_NEAR(r.calinskiHarabasz, e.at("calinski_harabasz").get<double>(),
                1e-9 * std::max(1.0, e.at("calinski_harabasz").get<double>()));
    EXPECT_NEAR(r.rmse, e.at("rmse").get<double>(), 1e-9);
    EXPECT_NEAR(r.variance, e.at("variance").get<double>(), 1e-9);
    EXPECT_NEAR(r.interCentroidDistance, e.at("inter_centroid_distance").get<double>(), 1e-9);
  }
}

TEST(Metrics, TwoPairExample) {
  const auto X = Tensor4D::matrix(4, 1, {0.0, 1.0, 10.0, 11.0});
  const std::vector<std::size_t> labels{0, 0, 1, 1};
  const auto s = silhouette_samples(X, labels);
  EXPECT_NEAR(s[0], 1.0 - 1.0 / 10.5, 1e-12);
  EXPECT_NEAR(s[0], 0.9048, 5e-5);
  EXPECT_NEAR(davies_bouldin(X, labels), 0.1, 1e-12);
  EXPECT_NEAR(calinski_harabasz(X, labels), 200.0, 1e-9);
  EXPECT_NEAR(within_cluster_variance(X, labels), 0.25, 1e-12);
  EXPECT_NEAR(inter_centroid_distance(X, labels), 10.0, 1e-12);
}

TEST(Metrics, DegenerateCoincidentClusters) {
  const auto X = Tensor4D::matrix(4, 2, 3.0);
  const std::vector<std::size_t> labels{0, 0, 1, 1};
  EXPECT_EQ(silhouette_score(X, labels), 0.0);
  EXPECT_TRUE(std::isinf(davies_bouldin(X, labels)));
  EXPECT_EQ(within_cluster_variance(X, labels), 0.0);
}

TEST(Metrics, RangesOnRandomData) {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 5; ++rep) {
    auto X = random_uniform({1, 1, 20, 3}, -1.0, 1.0, rng);
    const auto km = kmeans_cluster(X, {3, static_cast<std::uint64_t>(rep), 2});
    const double s = silhouette_score(X, km.labels);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
    EXPECT_GE(davies_bouldin(X, km.labels), 0.0);
    EXPECT_GT(calinski_harabasz(X, km.labels), 0.0);
  }
}

TEST(Metrics, MajorityVoteAccuracy) {
  EXPECT_EQ(majority_vote_accuracy({0, 0, 1, 1}, {5, 5, 6, 6}), 1.0);
  EXPECT_EQ(majority_vote_accuracy({0, 0, 0, 0}, {0, 0, 1, 1}), 0.5);
  EXPECT_EQ(majority_vote_accuracy({0, 1, 2, 3}, {0, 0, 1, 1}), 1.0);
}

TEST(Metrics, RmseExample) {
  EXPECT_EQ(rmse({Tensor4D::vector({1.0, 1.0})}, {Tensor4D::vector({0.0, 0.0})}), 1.0);
  EXPECT_THROW(rmse({Tensor4D::vector(2)}, {}), DimensionError);
}

// ---------------------------------------------------------------------------
// Training

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto cfg = small_config();
  const auto data = generate_synthetic_sequence(cfg.data);
  for (auto arch : {Architecture::FAConvLSTM, Architecture::ConvLSTM2D}) {
    const auto model = make_model(arch, cfg.model);
    ParameterStore store;
    std::mt19937_64 rng(1);
    model.init(store, rng);
    std::map<std::string, Tensor4D> before;
    for (const auto& [p, e] : store) before[p] = e.value;
    auto spec = cfg.train;
    spec.learningRate = 0.0;
    spec.steps = 3;
    for (auto opt : {OptimizerKind::Adam, OptimizerKind::SGD}) {
      spec.optimizer = opt;
      train(model, store, data.frames, spec);
      for (const auto& [p, e] : store) EXPECT_EQ(e.value, before[p]) << p;
    }
  }
}

TEST(Train, LossDecreasesAndBeatsConstantPredictor) {
  auto cfg = small_config();
  const auto data = generate_synthetic_sequence(cfg.data);
  double mean = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& f : data.frames)
    for (double v : f.raw()) mean += v, sq += v * v, ++n;
  mean /= static_cast<double>(n);
  const double constant_mse = sq / static_cast<double>(n) - mean * mean;
  for (auto opt : {OptimizerKind::Adam, OptimizerKind::SGD}) {
    const auto model = make_model(Architecture::FAConvLSTM, cfg.model);
    ParameterStore store;
    std::mt19937_64 rng(1);
    model.init(store, rng);
    auto spec = cfg.train;
    spec.optimizer = opt;
    spec.steps = 120;
    spec.learningRate = opt == OptimizerKind::Adam ? 0.01 : 0.5;
    spec.window = 4;
    const auto r = train(model, store, data.frames, spec);
    auto avg = [&](std::size_t from) {
      double s = 0.0;
      for (std::size_t i = from; i < from + 10; ++i) s += r.log[i].task;
      return s / 10.0;
    };
    EXPECT_LT(avg(110), avg(0)) << to_string(opt);
    EXPECT_LT(avg(110), constant_mse) << to_string(opt);
  }
}

TEST(Train, NonFiniteLossIsDivergence) {
  const auto cfg = small_config();
  auto data = generate_synthetic_sequence(cfg.data);
  for (auto& f : data.frames) f(0, 0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto model = make_model(Architecture::FAConvLSTM, cfg.model);
  ParameterStore store;
  std::mt19937_64 rng(1);
  model.init(store, rng);
  EXPECT_THROW(train(model, store, data.frames, cfg.train), DivergenceError);
}

TEST(Train, SpecValidation) {
  TrainSpec s;
  s.steps = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.learningRate = -1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.trainFraction = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.learningRate = 0.0;
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(optimizer_from_string("sgd"), OptimizerKind::SGD);
}

// ---------------------------------------------------------------------------
// Harness config and CSV output

TEST(HarnessConfig, JsonRoundTripAndRejections) {
  const auto c = small_config();
  const nlohmann::json j = c;
  const auto back = parse_harness_config(j.dump());
  EXPECT_EQ(nlohmann::json(back), j);
  auto bad = j;
  bad["extra"] = 1;
  EXPECT_THROW(parse_harness_config(bad.dump()), ConfigError);
  bad = j;
  bad.erase("spec_version");
  EXPECT_THROW(parse_harness_config(bad.dump()), ConfigError);
  bad = j;
  bad["spec_version"] = 2;
  EXPECT_THROW(parse_harness_config(bad.dump()), ConfigError);
  bad = j;
  bad["cluster"]["k"] = 100;
  EXPECT_THROW(parse_harness_config(bad.dump()), ConfigError);
  bad = j;
  bad["cluster"]["embedding"] = "H";
  EXPECT_THROW(parse_harness_config(bad.dump()), ConfigError);
  EXPECT_THROW(parse_harness_config("{not json"), ConfigError);
}

TEST(HarnessConfig, ShippedDefaultParses) {
  std::ifstream in(std::string(FACONV_CONFIG_DIR) + "/default.json");
  ASSERT_TRUE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto c = parse_harness_config(ss.str());
  EXPECT_EQ(nlohmann::json(c), nlohmann::json(HarnessConfig{}));
}

TEST(Harness, CompareOutputIsByteIdentical) {
  const auto cfg = small_config();
  auto render = [&] {
    const auto runs = run_compare(cfg, {Architecture::FAConvLSTM, Architecture::ConvLSTM2D});
    std::ostringstream m, l, e;
    write_metrics_csv(m, cfg, runs);
    write_losses_csv(l, cfg, runs);
    write_embeddings_csv(e, cfg, runs);
    return m.str() + l.str() + e.str();
  };
  const auto a = render();
  EXPECT_EQ(a, render());
  EXPECT_NE(a.find("# "), std::string::npos);
}

TEST(Harness, RunSeedReportsSensibleMetrics) {
  const auto cfg = small_config();
  const auto run = run_seed(cfg, Architecture::FAConvLSTM, 3);
  EXPECT_EQ(run.params, count_params(Architecture::FAConvLSTM, cfg.model) + cfg.model.F * cfg.model.C + cfg.model.C);
  EXPECT_EQ(run.trained.embeddings.rows(), cfg.data.T);
  EXPECT_GE(run.trained.accuracy, 0.5);
  EXPECT_LE(run.trained.accuracy, 1.0);
  EXPECT_EQ(run.training.log.size(), cfg.train.steps);
  EXPECT_TRUE(std::isfinite(run.trained.metrics.rmse));
}

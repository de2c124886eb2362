#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "oeflow/container.hpp"
#include "oeflow/data.hpp"
#include "oeflow/errors.hpp"
#include "oeflow/eval.hpp"
#include "support.hpp"

using namespace oeflow;

namespace {

Dataset labeled(Eigen::Index d, long normals, const std::vector<std::pair<std::string, long>>& types, Rng& rng) {
  Dataset ds;
  long total = normals;
  for (const auto& [tag, count] : types) total += count;
  ds.features = testing::random_matrix(d, total, rng);
  for (long i = 0; i < normals; ++i) ds.labels.push_back(kNormalLabel);
  for (const auto& [tag, count] : types) {
    ds.type_registry[tag] = "type " + tag;
    for (long i = 0; i < count; ++i) ds.labels.push_back(tag);
  }
  ds.validate();
  return ds;
}

SyntheticSpec small_spec(double shift, double noise, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.dimension = 4;
  spec.seed = seed;
  spec.normal_count = 2000;
  MixtureComponent c;
  c.mean = Vector::Zero(4);
  c.covariance = Matrix::Identity(4, 4);
  spec.components.push_back(c);
  AnomalyFamily a;
  a.tag = "shifted";
  a.shift = shift;
  a.subspace = Matrix::Zero(2, 4);
  a.subspace(0, 0) = 1.0;
  a.subspace(1, 1) = 1.0;
  a.noise_scale = noise;
  a.count = 2000;
  spec.anomalies.push_back(a);
  return spec;
}

std::set<std::string> column_keys(const Dataset& ds) {
  std::set<std::string> keys;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    std::ostringstream key;
    key << ds.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index r = 0; r < ds.dimension(); ++r) key << ',' << format_double(ds.features(r, i));
    keys.insert(key.str());
  }
  return keys;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("dataset text round-trips exactly") {
    Rng rng(1);
    Dataset ds = labeled(3, 5, {{"a", 2}, {"b", 1}}, rng);
    ds.features(0, 0) = 1e-310;
    ds.features(1, 0) = -0.1;
    ds.features(2, 0) = 123456789.123456789;
    const auto dir = testing::scratch_dir("data_roundtrip");
    save_dataset(ds, dir / "d.csv");
    const Dataset back = load_dataset(dir / "d.csv");
    CHECK(back.features == ds.features);
    CHECK(back.labels == ds.labels);
    CHECK(back.present_types() == std::vector<std::string>{"a", "b"});
  }

  TEST_CASE("header names the columns") {
    Rng rng(2);
    std::ostringstream out;
    write_dataset(out, labeled(2, 1, {}, rng));
    CHECK(out.str().rfind("label,f0,f1\nnormal,", 0) == 0);
  }

  TEST_CASE("malformed rows report their line") {
    std::istringstream wrong_columns("label,f0,f1\nnormal,1,2\nnormal,1\n");
    try {
      read_dataset(wrong_columns);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    std::istringstream bad_number("label,f0\nnormal,1\nnormal,2\nx,abc\n");
    try {
      read_dataset(bad_number);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 4);
    }
    std::istringstream empty_label("label,f0\n,1\n");
    CHECK_THROWS_AS(read_dataset(empty_label), ParseError);
  }

  TEST_CASE("empty or headerless input is a format error") {
    std::istringstream empty("");
    CHECK_THROWS_AS(read_dataset(empty), FormatError);
    std::istringstream headerless("normal,1,2\n");
    CHECK_THROWS_AS(read_dataset(headerless), FormatError);
    std::istringstream no_features("label\n");
    CHECK_THROWS_AS(read_dataset(no_features), FormatError);
    std::istringstream infinite("label,f0\nnormal,inf\n");
    CHECK_THROWS_AS(read_dataset(infinite), Error);
  }

  TEST_CASE("missing files are io errors") {
    CHECK_THROWS_AS(load_dataset("/nonexistent/dir/x.csv"), IoError);
  }

  TEST_CASE("split example") {
    Rng rng(3);
    const Dataset ds = labeled(2, 100, {{"a", 20}}, rng);
    SplitSpec spec;
    spec.train = 0.5;
    spec.validation = 0.1;
    spec.test = 0.4;
    spec.seed = 4;
    const Splits s = split(ds, spec);
    CHECK(s.validation.normal_count() == 10);
    CHECK(s.validation.anomaly_count() == 0);
    CHECK(s.train.normal_count() == 50);
    CHECK(s.test.normal_count() == 40);
    CHECK(s.train.anomaly_count() + s.test.anomaly_count() == 20);
    CHECK(s.train.anomaly_count() == 11);
  }

  TEST_CASE("splits are deterministic and partition the selection") {
    Rng rng(5);
    Dataset ds = labeled(2, 300, {{"a", 40}, {"b", 25}}, rng);
    SplitSpec spec;
    spec.seed = 9;
    const Splits s1 = split(ds, spec);
    const Splits s2 = split(ds, spec);
    CHECK(s1.train.features == s2.train.features);
    CHECK(s1.test.labels == s2.test.labels);
    spec.seed = 10;
    CHECK(split(ds, spec).train.features != s1.train.features);

    const auto train = column_keys(s1.train), val = column_keys(s1.validation), test = column_keys(s1.test);
    CHECK(train.size() + val.size() + test.size() ==
          static_cast<std::size_t>(s1.train.size() + s1.validation.size() + s1.test.size()));
    std::set<std::string> all = train;
    all.insert(val.begin(), val.end());
    all.insert(test.begin(), test.end());
    CHECK(all.size() == train.size() + val.size() + test.size());
    const auto source = column_keys(ds);
    CHECK(std::includes(source.begin(), source.end(), all.begin(), all.end()));
    CHECK(s1.validation.anomaly_count() == 0);
    CHECK(s1.train.present_types() == s1.test.present_types());
  }

  TEST_CASE("full fractions cover every sample") {
    Rng rng(6);
    const Dataset ds = labeled(2, 100, {{"a", 30}}, rng);
    SplitSpec spec;
    spec.train = 0.6;
    spec.validation = 0.1;
    spec.test = 0.3;
    const Splits s = split(ds, spec);
    CHECK(s.train.size() + s.validation.size() + s.test.size() == ds.size());
  }

  TEST_CASE("explicit split indices") {
    Rng rng(7);
    const Dataset ds = labeled(2, 6, {{"a", 2}}, rng);
    SplitSpec spec;
    spec.explicit_indices = SplitSpec::Indices{{0, 1, 6}, {2}, {3, 7}};
    const Splits s = split(ds, spec);
    CHECK(s.train.size() == 3);
    CHECK(s.train.features.col(2) == ds.features.col(6));
    spec.explicit_indices = SplitSpec::Indices{{0}, {6}, {1}};
    CHECK_THROWS_AS(split(ds, spec), UsageError);
    spec.explicit_indices = SplitSpec::Indices{{0, 1}, {1}, {2}};
    CHECK_THROWS_AS(split(ds, spec), UsageError);
    spec.explicit_indices = SplitSpec::Indices{{0}, {1}, {99}};
    CHECK_THROWS_AS(split(ds, spec), UsageError);
  }

  TEST_CASE("split argument checks") {
    Rng rng(8);
    const Dataset ds = labeled(2, 5, {{"a", 2}}, rng);
    SplitSpec spec;
    spec.train = 0.8;
    spec.validation = 0.2;
    spec.test = 0.3;
    CHECK_THROWS_AS(split(ds, spec), UsageError);
    spec = SplitSpec{};
    spec.validation = 0.0;
    CHECK_THROWS_AS(split(ds, spec), UsageError);
    spec = SplitSpec{};
    CHECK_THROWS_AS(split(ds, spec), UsageError);  // 5 normals leave no validation sample
  }

  TEST_CASE("synthetic generation is deterministic") {
    const SyntheticSpec spec = default_benchmark_spec(3);
    const Dataset a = generate_synthetic(spec);
    const Dataset b = generate_synthetic(spec);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    CHECK(generate_synthetic(default_benchmark_spec(4)).features != a.features);
  }

  TEST_CASE("default benchmark shape") {
    const SyntheticSpec spec = default_benchmark_spec();
    CHECK(spec.dimension == 16);
    CHECK(spec.components.size() == 3);
    REQUIRE(spec.anomalies.size() == 8);
    CHECK(spec.anomalies.front().shift == doctest::Approx(0.5));
    CHECK(spec.anomalies.back().shift == doctest::Approx(4.0));
    const Dataset ds = generate_synthetic(spec);
    CHECK(ds.normal_count() == 5000);
    CHECK(ds.anomaly_count() == 800);
    CHECK(ds.present_types().size() == 8);
  }

  TEST_CASE("anomalies are displaced by shift sigma along the type direction") {
    const Dataset ds = generate_synthetic(small_spec(3.0, 0.0, 1));
    const Vector mean = ds.anomalies().rowwise().mean();
    const Vector expected = Vector{{3.0 / std::sqrt(2.0), 3.0 / std::sqrt(2.0), 0.0, 0.0}};
    CHECK((mean - expected).cwiseAbs().maxCoeff() < 0.1);
  }

  TEST_CASE("zero shift anomalies are indistinguishable from normals") {
    const Dataset ds = generate_synthetic(small_spec(0.0, 0.0, 2));
    Vector score(ds.size());
    for (Eigen::Index i = 0; i < ds.size(); ++i) score[i] = ds.features.col(i).squaredNorm();
    CHECK(std::abs(auc(make_scored_set(score, ds.labels)) - 0.5) < 0.05);
  }

  TEST_CASE("manifest regenerates the dataset") {
    const SyntheticSpec spec = default_benchmark_spec(11);
    const SyntheticSpec back = parse_synthetic_manifest(synthetic_manifest(spec));
    CHECK(generate_synthetic(back).features == generate_synthetic(spec).features);
    CHECK(synthetic_manifest(back) == synthetic_manifest(spec));
    CHECK_THROWS_AS(parse_synthetic_manifest("{not json"), ParseError);
    CHECK_THROWS_AS(parse_synthetic_manifest("{\"dimension\": 2}"), Error);
  }

  TEST_CASE("synthetic spec validation") {
    SyntheticSpec spec = small_spec(1.0, 0.1, 1);
    spec.components[0].weight = 0.5;
    CHECK_THROWS_AS(spec.validate(), UsageError);
    spec = small_spec(1.0, 0.1, 1);
    spec.components.clear();
    CHECK_THROWS_AS(spec.validate(), UsageError);
    spec = small_spec(1.0, 0.1, 1);
    spec.anomalies[0].count = -1;
    CHECK_THROWS_AS(spec.validate(), UsageError);
    spec = small_spec(1.0, 0.1, 1);
    spec.anomalies.push_back(spec.anomalies[0]);
    CHECK_THROWS_AS(spec.validate(), UsageError);
  }

  TEST_CASE("subsampling anomalies") {
    Rng rng(12);
    const Dataset ds = labeled(2, 30, {{"a", 10}, {"b", 10}}, rng);
    const Dataset all = subsample_anomalies(ds, 20, 1);
    CHECK(all.features == ds.features);
    const Dataset none = subsample_anomalies(ds, 0, 1);
    CHECK(none.anomaly_count() == 0);
    CHECK(none.normals() == ds.normals());
    CHECK(subsample_anomalies(ds, 7, 3).anomaly_count() == 7);
    CHECK(subsample_anomalies(ds, 7, 3).features == subsample_anomalies(ds, 7, 3).features);
    CHECK_THROWS_AS(subsample_anomalies(ds, 21, 1), UsageError);
  }

  TEST_CASE("different seeds pick different subsets") {
    Rng rng(13);
    const Dataset ds = labeled(1, 10, {{"a", 1000}}, rng);
    int collisions = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
      const Dataset a = subsample_anomalies(ds, 8, 2 * trial);
      const Dataset b = subsample_anomalies(ds, 8, 2 * trial + 1);
      collisions += a.features == b.features ? 1 : 0;
    }
    CHECK(collisions < 5);
  }

  TEST_CASE("type selection") {
    Rng rng(14);
    const Dataset ds = labeled(2, 20, {{"a", 5}, {"b", 6}, {"c", 7}}, rng);
    CHECK(select_types(ds, {"a", "b", "c"}).features == ds.features);
    const Dataset none = select_types(ds, {});
    CHECK(none.anomaly_count() == 0);
    CHECK(none.normal_count() == 20);
    CHECK(select_types(ds, {"a"}).anomaly_count() + select_types(ds, {"b", "c"}).anomaly_count() == ds.anomaly_count());
    CHECK_THROWS_AS(select_types(ds, {"zzz"}), UsageError);
    const Dataset only_b = subsample_anomalies(select_types(ds, {"b"}), 3, 5);
    for (Eigen::Index i = 0; i < only_b.size(); ++i) {
      if (only_b.is_anomaly(i)) CHECK(only_b.labels[static_cast<std::size_t>(i)] == "b");
    }
  }

  TEST_CASE("dataset invariants") {
    Rng rng(15);
    Dataset ds = labeled(2, 3, {{"a", 1}}, rng);
    ds.labels.back() = "unregistered";
    CHECK_THROWS_AS(ds.validate(), FormatError);
    ds.register_labels();
    CHECK_NOTHROW(ds.validate());
    ds.features(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(ds.validate(), FormatError);
    ds.labels.pop_back();
    CHECK_THROWS_AS(ds.validate(), FormatError);
  }
}

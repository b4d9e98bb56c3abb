#include <doctest.h>

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <filesystem>

#include "geoprompt/analysis.hpp"
#include "geoprompt/io_util.hpp"

using namespace geoprompt;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = GEOPROMPT_FIXTURES;

double naive_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

double boost_two_sided(double t, double dof) {
  const boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

EmbeddingVec vec2(double a, double b) {
  EmbeddingVec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("Student t tail against Boost") {
  for (const double dof : {1.0, 2.0, 5.0, 30.0, 1951.0}) {
    for (const double t : {0.0, 0.1, 0.5, 1.0, 2.0, 3.5, 8.0}) {
      const double want = boost_two_sided(t, dof);
      CHECK(student_t_two_sided_p(t, dof) == doctest::Approx(want).epsilon(1e-10));
      CHECK(student_t_two_sided_p(-t, dof) == doctest::Approx(want).epsilon(1e-10));
    }
  }
  CHECK(student_t_two_sided_p(INFINITY, 10) == 0.0);
  CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  // I_x(1, 1) = x
  CHECK(incomplete_beta(1.0, 1.0, 0.3) == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("pearson matches the naive formula") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 3 + rng.uniform_index(60);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < n; ++i) {
      x.push_back(rng.normal());
      y.push_back(0.3 * x.back() + rng.normal());
    }
    const auto r = pearson(x, y);
    CHECK(std::fabs(r.rho - naive_pearson(x, y)) <= 1e-12);
    CHECK(r.n == n);
    const double tstat = r.rho * std::sqrt(double(n - 2) / (1.0 - r.rho * r.rho));
    CHECK(r.p_value == doctest::Approx(boost_two_sided(tstat, double(n - 2))).epsilon(1e-9));
    CHECK(r.significant == (r.p_value < 0.01));
  }
}

TEST_CASE("pearson edge cases") {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> up, down;
  for (double v : x) {
    up.push_back(2 * v + 1);
    down.push_back(-3 * v);
  }
  CHECK(std::fabs(pearson(x, up).rho - 1.0) <= 1e-12);
  CHECK(std::fabs(pearson(x, down).rho + 1.0) <= 1e-12);
  CHECK(pearson(x, up).p_value < 1e-10);
  try {
    pearson({1, 2}, {3, 4});
    FAIL("expected TooFewPoints");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooFewPoints);
  }
  try {
    pearson(x, {1, 1, 1, 1, 1});
    FAIL("expected ZeroVariance");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroVariance);
  }
}

TEST_CASE("class embedding distance anchors") {
  const ClassEmbeddings a = {{"bed", vec2(1, 0)}, {"rug", vec2(0, 1)}};
  CHECK(avg_class_embedding_distance(a, a) == doctest::Approx(0.0).epsilon(1e-15));
  const ClassEmbeddings flipped = {{"bed", vec2(-1, 0)}, {"rug", vec2(0, -2)}};
  CHECK(avg_class_embedding_distance(a, flipped) == doctest::Approx(2.0));
  const ClassEmbeddings half = {{"bed", vec2(0, 1)}, {"rug", vec2(0, 1)}};
  CHECK(avg_class_embedding_distance(a, half) == doctest::Approx(0.5));
  try {
    avg_class_embedding_distance(a, {{"bed", vec2(1, 0)}});
    FAIL("expected ClassSetMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ClassSetMismatch);
  }
}

TEST_CASE("63 countries give 1953 pairs") {
  const auto table = load_country_stats(kFixtures / "country_stats_63.csv");
  CHECK(table.values.size() == 63);
  CHECK(table.statistics.size() == 4);
  std::vector<std::string> countries;
  std::map<std::string, ClassEmbeddings> emb;
  Rng rng(5);
  for (const auto& [c, _] : table.values) {
    countries.push_back(c);
    emb[c] = {{"bed", gaussian_matrix(4, 1, 1.0, rng).col(0)}, {"rug", gaussian_matrix(4, 1, 1.0, rng).col(0)}};
  }
  const auto corr = stat_correlation(countries, table.values, emb, table.statistics);
  CHECK(corr.pairs == 1953);
  CHECK(corr.rows.size() == 4);
  CHECK(corr.warnings.empty());
  const auto series = pair_distances(countries, emb);
  for (const auto& row : corr.rows) {
    std::vector<double> y;
    for (const auto& [a, b] : series.pairs) {
      y.push_back(std::fabs(table.values.at(a).at(row.statistic) - table.values.at(b).at(row.statistic)));
    }
    CHECK(std::fabs(row.result.rho - naive_pearson(series.distance, y)) <= 1e-12);
  }

  const std::string csv = format_correlation_csv({{"country_llm", corr}});
  CHECK(csv.rfind("statistic,country_llm,pairs\n", 0) == 0);
  CHECK(csv.find(",1953\n") != std::string::npos);
}

TEST_CASE("a statistic missing for one country is skipped") {
  CountryStats stats = {{"A", {{"gdp", 1}}}, {"B", {{"gdp", 2}}}, {"C", {}}};
  std::map<std::string, ClassEmbeddings> emb = {
      {"A", {{"bed", vec2(1, 0)}}}, {"B", {{"bed", vec2(0, 1)}}}, {"C", {{"bed", vec2(1, 1)}}}};
  const auto corr = stat_correlation({"A", "B", "C"}, stats, emb, {"gdp"});
  CHECK(corr.rows.empty());
  CHECK(corr.warnings.size() == 1);
}

TEST_CASE("topic counts against a hand tally") {
  DescriptorSet dset;
  const auto entry = [](std::vector<std::string> d) { return DescriptorEntry{std::move(d), "m", "h", "t"}; };
  dset.set("stove", "Kenya", entry({"uses Charcoal", "clay body"}));
  dset.set("stove", "Ghana", entry({"gas burner"}));
  dset.set("stove", "Burundi", entry({"wood fire"}));
  dset.set("stove", "Japan", entry({"charcoal grill"}));
  const std::map<std::string, std::string> continent = {
      {"Kenya", "Africa"}, {"Ghana", "Africa"}, {"Burundi", "Africa"}, {"Japan", "Asia"}};
  const auto rows = topic_counts(dset, {"charcoal"}, continent);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].continent == "Africa");
  CHECK(rows[0].count == 1);
  CHECK(rows[0].rel == doctest::Approx(1.0 / 3.0));
  CHECK(rows[1].count == 1);
  CHECK(rows[1].rel == 1.0);
  CHECK(format_topic_csv(rows).rfind("class,keyword,continent,count,rel\n", 0) == 0);
  try {
    topic_counts(dset, {"x"}, {{"Kenya", "Africa"}});
    FAIL("expected UnmappedCountry");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnmappedCountry);
  }
}

TEST_CASE("embedding export round-trips through the store loader") {
  const auto path = fs::temp_directory_path() / "geoprompt_analysis" / "export.tsv";
  export_embeddings({{"stove", "Japan", "country_llm", vec2(3, 4)}, {"bed", "Peru", "default", vec2(0, 2)}}, path);
  const auto store = load_embedding_store(path);
  CHECK(store.size() == 2);
  CHECK((store.at("stove__Japan__country_llm") - vec2(0.6, 0.8)).norm() < 1e-15);
  CHECK(store.at("bed__Peru__default") == vec2(0, 1));
}

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "geoprompt/knowledge.hpp"

namespace geoprompt {

// class name -> embedding, for one country.
using ClassEmbeddings = std::map<std::string, EmbeddingVec>;

// (1/N_c) sum_c (1 - cos(a_c, b_c)). Throws ClassSetMismatch.
double avg_class_embedding_distance(const ClassEmbeddings& a, const ClassEmbeddings& b);

struct PearsonResult {
  double rho = 0.0;
  double p_value = 1.0;
  bool significant = false;  // p < alpha
  std::size_t n = 0;
};

inline constexpr double kSignificanceAlpha = 0.01;

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);
// P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

// Throws TooFewPoints (n < 3) and ZeroVariance.
PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y,
                      double alpha = kSignificanceAlpha);

// country -> statistic -> value. Missing cells are simply absent.
using CountryStats = std::map<std::string, std::map<std::string, double>>;

struct CountryStatsTable {
  std::vector<std::string> statistics;  // header order
  CountryStats values;
};

// CSV: header "country,<stat>,...", one row per country; empty cell = missing.
CountryStatsTable load_country_stats(const std::filesystem::path& path);

struct PairDistanceSeries {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<double> distance;
};

// All unordered pairs of the (sorted) countries.
PairDistanceSeries pair_distances(std::vector<std::string> countries,
                                  const std::map<std::string, ClassEmbeddings>& embeddings);

struct CorrelationRow {
  std::string statistic;
  PearsonResult result;
};

struct StatCorrelation {
  std::vector<CorrelationRow> rows;
  std::size_t pairs = 0;
  std::vector<std::string> warnings;
};

StatCorrelation stat_correlation(const std::vector<std::string>& countries, const CountryStats& stats,
                                 const std::map<std::string, ClassEmbeddings>& embeddings,
                                 const std::vector<std::string>& statistics);

// Per-country k_c^g for every class, through the knowledge module.
std::map<std::string, ClassEmbeddings> country_class_embeddings(const std::vector<ClassInfo>& classes,
                                                                const std::vector<std::string>& countries,
                                                                PromptStrategy strategy, const DescriptorSet& dset,
                                                                const TextEncoder& text);

// One column per strategy: rho to two decimals, "*" when NOT significant.
std::string format_correlation_csv(const std::vector<std::pair<std::string, StatCorrelation>>& by_strategy);

struct TopicRow {
  std::string class_name;
  std::string keyword;
  std::string continent;
  std::size_t count = 0;
  double rel = 0.0;
};

// Countries of each continent whose D_g(c) mentions the keyword (case-insensitive
// substring), and that count over the continent's countries with an entry for c.
// Throws UnmappedCountry.
std::vector<TopicRow> topic_counts(const DescriptorSet& dset, const std::vector<std::string>& keywords,
                                   const std::map<std::string, std::string>& continent_of);

std::string format_topic_csv(const std::vector<TopicRow>& rows);

struct ExportRow {
  std::string class_name;
  std::string country;
  std::string strategy;
  EmbeddingVec vector;
};

// Embedding TSV with ids "<class>__<country>__<strategy>"; vectors normalized.
void export_embeddings(const std::vector<ExportRow>& rows, const std::filesystem::path& path);

}  // namespace geoprompt

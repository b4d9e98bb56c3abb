#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoprompt/error.hpp"

namespace geoprompt {

enum class Split { SourceTrain, SourceVal, SourceTest, Target };
std::string_view to_string(Split s);
Split parse_split(std::string_view name);

struct SampleMeta {
  std::string id;
  std::string label;  // class name
  std::string country;
  std::string continent;
  std::string income_bucket;  // low | medium | high
  Split split = Split::Target;

  bool operator==(const SampleMeta&) const = default;
};

// Manifest: one JSON object per line with keys id, class, country, continent,
// income_bucket, split.
std::vector<SampleMeta> load_manifest(const std::filesystem::path& path);
std::string format_manifest(const std::vector<SampleMeta>& rows);
void save_manifest(const std::filesystem::path& path, const std::vector<SampleMeta>& rows);

// A ranked prediction: class indices, best first.
using Ranking = std::vector<std::size_t>;

// Recall@k for every class index that has at least one sample; absent classes
// map to nullopt.
std::vector<std::optional<double>> per_class_recall(const std::vector<Ranking>& predictions,
                                                    const std::vector<std::size_t>& labels, std::size_t num_classes,
                                                    std::size_t k);

// Unweighted mean of per-class recall@k over the classes present.
double balanced_accuracy(const std::vector<Ranking>& predictions, const std::vector<std::size_t>& labels,
                         std::size_t num_classes, std::size_t k);

struct EvalReport {
  std::vector<std::size_t> ks;
  std::map<std::size_t, std::map<std::string, double>> recall;  // k -> class -> recall
  std::map<std::size_t, double> balanced;                       // k -> balanced accuracy
  std::map<std::string, std::size_t> class_counts;
  std::size_t num_samples = 0;

  double at(std::size_t k) const;
};

EvalReport evaluate(const std::vector<Ranking>& predictions, const std::vector<std::size_t>& labels,
                    const std::vector<std::string>& class_names, const std::vector<std::size_t>& ks = {1, 3});

// group_key: continent | country | income_bucket. Throws UnknownGroupKey.
std::map<std::string, EvalReport> group_report(const std::vector<Ranking>& predictions,
                                               const std::vector<std::size_t>& labels,
                                               const std::vector<SampleMeta>& metas,
                                               const std::vector<std::string>& class_names,
                                               const std::string& group_key,
                                               const std::vector<std::size_t>& ks = {1, 3});

inline const std::vector<double> kDefaultStrataThresholds = {40, 60, 80, 100};

struct StratumRow {
  double threshold = 0.0;  // percent
  std::size_t count = 0;
  std::optional<double> mean_recall;  // nullopt for an empty stratum
};

// Classes whose baseline recall (fraction) is < t% (<= 100% when t = 100), and
// the method's mean recall@k over them.
std::vector<StratumRow> difficulty_strata(const std::map<std::string, double>& baseline_recalls,
                                          const EvalReport& method,
                                          const std::vector<double>& thresholds = kDefaultStrataThresholds,
                                          std::size_t k = 1);

// Named scalar cells, e.g. "total", "continent/Africa". A null cell is an
// undefined value that still belongs to the structure.
using CellTable = std::map<std::string, std::optional<double>>;

CellTable report_cells(const EvalReport& global, const std::map<std::string, std::map<std::string, EvalReport>>& groups,
                       std::size_t k = 1);

// b - a per cell; null if either side is null. Throws StructureMismatch.
CellTable delta_table(const CellTable& a, const CellTable& b);

// Serialized forms. Percentages in CSV use one decimal.
nlohmann::ordered_json report_json(const EvalReport& report);
nlohmann::ordered_json report_json(const EvalReport& global,
                                   const std::map<std::string, std::map<std::string, EvalReport>>& groups);
std::string format_percent(std::optional<double> fraction);
std::string format_delta_points(std::optional<double> fraction_delta);
std::string format_cells_csv(const CellTable& acc, const std::optional<CellTable>& delta);
std::string format_strata_csv(const std::vector<StratumRow>& rows);

// Baseline recall file: CSV "class,recall" with recall a fraction.
std::map<std::string, double> load_baseline_recalls(const std::filesystem::path& path);
std::string format_baseline_recalls(const EvalReport& report, std::size_t k = 1);

}  // namespace geoprompt

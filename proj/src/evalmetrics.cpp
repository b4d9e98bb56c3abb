#include "geoprompt/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "geoprompt/io_util.hpp"

namespace geoprompt {

namespace {

constexpr std::string_view kSplitNames[] = {"source-train", "source-val", "source-test", "target"};
const std::set<std::string> kIncomeBuckets = {"low", "medium", "high"};

}  // namespace

std::string_view to_string(Split s) { return kSplitNames[static_cast<int>(s)]; }

Split parse_split(std::string_view name) {
  for (int i = 0; i < 4; ++i) {
    if (kSplitNames[i] == name) return static_cast<Split>(i);
  }
  throw Error(ErrorKind::ParseError, "unknown split '" + std::string(name) + "'");
}

std::vector<SampleMeta> load_manifest(const std::filesystem::path& path) {
  const auto lines = io::read_lines(path);
  std::vector<SampleMeta> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    SampleMeta m;
    try {
      const auto j = nlohmann::json::parse(lines[i]);
      m.id = j.at("id").get<std::string>();
      m.label = j.at("class").get<std::string>();
      m.country = j.at("country").get<std::string>();
      m.continent = j.at("continent").get<std::string>();
      m.income_bucket = j.at("income_bucket").get<std::string>();
      m.split = parse_split(j.at("split").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseError, where + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), where + ": " + e.what());
    }
    if (m.id.empty() || m.label.empty() || m.country.empty()) throw Error(ErrorKind::EmptyField, where);
    if (!kIncomeBuckets.count(m.income_bucket)) {
      throw Error(ErrorKind::ParseError, where + ": income_bucket must be low, medium or high");
    }
    if (!seen.insert(m.id).second) throw Error(ErrorKind::DuplicateId, where + ": " + m.id);
    out.push_back(std::move(m));
  }
  return out;
}

std::string format_manifest(const std::vector<SampleMeta>& rows) {
  std::string out;
  for (const auto& m : rows) {
    nlohmann::ordered_json j;
    j["id"] = m.id;
    j["class"] = m.label;
    j["country"] = m.country;
    j["continent"] = m.continent;
    j["income_bucket"] = m.income_bucket;
    j["split"] = std::string(to_string(m.split));
    out += j.dump() + "\n";
  }
  return out;
}

void save_manifest(const std::filesystem::path& path, const std::vector<SampleMeta>& rows) {
  io::write_file(path, format_manifest(rows));
}

// ---------------------------------------------------------------------------

std::vector<std::optional<double>> per_class_recall(const std::vector<Ranking>& predictions,
                                                    const std::vector<std::size_t>& labels, std::size_t num_classes,
                                                    std::size_t k) {
  if (predictions.size() != labels.size()) throw Error(ErrorKind::DimensionMismatch, "predictions vs labels");
  if (labels.empty()) throw Error(ErrorKind::EmptyEvalSet, "no samples");
  if (k < 1) throw Error(ErrorKind::InvalidConfig, "k must be >= 1");
  std::vector<std::size_t> hits(num_classes, 0), totals(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t y = labels[i];
    if (y >= num_classes) throw Error(ErrorKind::DimensionMismatch, "label out of range");
    ++totals[y];
    const auto& r = predictions[i];
    const auto end = r.begin() + static_cast<std::ptrdiff_t>(std::min(k, r.size()));
    if (std::find(r.begin(), end, y) != end) ++hits[y];
  }
  std::vector<std::optional<double>> out(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (totals[c] > 0) out[c] = double(hits[c]) / double(totals[c]);
  }
  return out;
}

double balanced_accuracy(const std::vector<Ranking>& predictions, const std::vector<std::size_t>& labels,
                         std::size_t num_classes, std::size_t k) {
  const auto recalls = per_class_recall(predictions, labels, num_classes, k);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : recalls) {
    if (r) {
      sum += *r;
      ++n;
    }
  }
  return sum / double(n);
}

double EvalReport::at(std::size_t k) const {
  const auto it = balanced.find(k);
  if (it == balanced.end()) throw Error(ErrorKind::NotFound, "no balanced accuracy at k=" + std::to_string(k));
  return it->second;
}

EvalReport evaluate(const std::vector<Ranking>& predictions, const std::vector<std::size_t>& labels,
                    const std::vector<std::string>& class_names, const std::vector<std::size_t>& ks) {
  EvalReport rep;
  rep.ks = ks;
  rep.num_samples = labels.size();
  for (const std::size_t k : ks) {
    const auto recalls = per_class_recall(predictions, labels, class_names.size(), k);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < recalls.size(); ++c) {
      if (!recalls[c]) continue;
      rep.recall[k][class_names[c]] = *recalls[c];
      sum += *recalls[c];
      ++n;
    }
    rep.balanced[k] = sum / double(n);
  }
  for (const std::size_t y : labels) ++rep.class_counts[class_names.at(y)];
  return rep;
}

std::map<std::string, EvalReport> group_report(const std::vector<Ranking>& predictions,
                                               const std::vector<std::size_t>& labels,
                                               const std::vector<SampleMeta>& metas,
                                               const std::vector<std::string>& class_names,
                                               const std::string& group_key, const std::vector<std::size_t>& ks) {
  std::string SampleMeta::*field = nullptr;
  if (group_key == "continent") field = &SampleMeta::continent;
  else if (group_key == "country") field = &SampleMeta::country;
  else if (group_key == "income_bucket") field = &SampleMeta::income_bucket;
  else throw Error(ErrorKind::UnknownGroupKey, group_key);
  if (metas.size() != labels.size()) throw Error(ErrorKind::DimensionMismatch, "metas vs labels");

  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < metas.size(); ++i) members[metas[i].*field].push_back(i);
  std::map<std::string, EvalReport> out;
  for (const auto& [group, idx] : members) {
    std::vector<Ranking> p;
    std::vector<std::size_t> l;
    for (const std::size_t i : idx) {
      p.push_back(predictions[i]);
      l.push_back(labels[i]);
    }
    out.emplace(group, evaluate(p, l, class_names, ks));
  }
  return out;
}

std::vector<StratumRow> difficulty_strata(const std::map<std::string, double>& baseline_recalls,
                                          const EvalReport& method, const std::vector<double>& thresholds,
                                          std::size_t k) {
  const auto rit = method.recall.find(k);
  if (rit == method.recall.end()) throw Error(ErrorKind::NotFound, "method report lacks k=" + std::to_string(k));
  for (const auto& [cls, r] : rit->second) {
    if (!baseline_recalls.count(cls)) throw Error(ErrorKind::ClassSetMismatch, "baseline lacks class '" + cls + "'");
  }
  std::vector<StratumRow> rows;
  for (const double t : thresholds) {
    StratumRow row;
    row.threshold = t;
    double sum = 0.0;
    for (const auto& [cls, r] : rit->second) {
      const double b = baseline_recalls.at(cls);
      const bool in = t >= 100.0 ? b <= 1.0 : b < t / 100.0;
      if (in) {
        ++row.count;
        sum += r;
      }
    }
    if (row.count > 0) row.mean_recall = sum / double(row.count);
    rows.push_back(row);
  }
  return rows;
}

CellTable report_cells(const EvalReport& global,
                       const std::map<std::string, std::map<std::string, EvalReport>>& groups, std::size_t k) {
  CellTable t;
  t["total"] = global.at(k);
  for (const auto& [key, per_group] : groups) {
    for (const auto& [name, rep] : per_group) t[key + "/" + name] = rep.at(k);
  }
  return t;
}

CellTable delta_table(const CellTable& a, const CellTable& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::StructureMismatch, "tables differ in cell count");
  CellTable out;
  for (const auto& [key, va] : a) {
    const auto it = b.find(key);
    if (it == b.end()) throw Error(ErrorKind::StructureMismatch, "cell '" + key + "' missing from second table");
    if (va && it->second) out[key] = *it->second - *va;
    else out[key] = std::nullopt;
  }
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["num_samples"] = report.num_samples;
  nlohmann::ordered_json bal, rec;
  for (const std::size_t k : report.ks) {
    const std::string key = "top" + std::to_string(k);
    bal[key] = report.balanced.at(k);
    nlohmann::ordered_json per;
    for (const auto& [cls, r] : report.recall.at(k)) per[cls] = r;
    rec[key] = std::move(per);
  }
  j["balanced_accuracy"] = std::move(bal);
  j["per_class_recall"] = std::move(rec);
  nlohmann::ordered_json counts;
  for (const auto& [cls, n] : report.class_counts) counts[cls] = n;
  j["class_counts"] = std::move(counts);
  return j;
}

nlohmann::ordered_json report_json(const EvalReport& global,
                                   const std::map<std::string, std::map<std::string, EvalReport>>& groups) {
  nlohmann::ordered_json j = report_json(global);
  nlohmann::ordered_json g = nlohmann::ordered_json::object();
  for (const auto& [key, per_group] : groups) {
    nlohmann::ordered_json m;
    for (const auto& [name, rep] : per_group) m[name] = report_json(rep);
    g[key] = std::move(m);
  }
  j["groups"] = std::move(g);
  return j;
}

std::string format_percent(std::optional<double> fraction) {
  return fraction ? io::format_fixed(100.0 * *fraction, 1) : "";
}

std::string format_delta_points(std::optional<double> fraction_delta) {
  if (!fraction_delta) return "";
  std::string s = io::format_fixed(100.0 * *fraction_delta, 1);
  if (s.front() != '-') s.insert(s.begin(), '+');
  return s;
}

std::string format_cells_csv(const CellTable& acc, const std::optional<CellTable>& delta) {
  std::string out = delta ? "group,acc,delta\n" : "group,acc\n";
  for (const auto& [key, v] : acc) {
    out += key + "," + format_percent(v);
    if (delta) {
      const auto it = delta->find(key);
      out += "," + (it == delta->end() ? std::string() : format_delta_points(it->second));
    }
    out += "\n";
  }
  return out;
}

std::string format_strata_csv(const std::vector<StratumRow>& rows) {
  std::string out = "threshold,count,acc\n";
  for (const auto& r : rows) {
    const std::string label = (r.threshold >= 100.0 ? "<=" : "<") + io::format_double(r.threshold) + "%";
    out += label + "," + std::to_string(r.count) + "," + format_percent(r.mean_recall) + "\n";
  }
  return out;
}

std::map<std::string, double> load_baseline_recalls(const std::filesystem::path& path) {
  const auto lines = io::read_lines(path);
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = io::trim(lines[i]);
    if (line.empty() || (i == 0 && line.rfind("class,", 0) == 0)) continue;
    const auto cells = io::split(line, ',');
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    if (cells.size() != 2) throw Error(ErrorKind::ParseError, where + ": expected class,recall");
    double r = 0.0;
    try {
      r = io::parse_double(cells[1]);
    } catch (const Error& e) {
      throw Error(ErrorKind::ParseError, where + ": " + e.what());
    }
    if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorKind::ParseError, where + ": recall must be in [0, 1]");
    if (!out.emplace(std::string(io::trim(cells[0])), r).second) throw Error(ErrorKind::DuplicateId, where);
  }
  return out;
}

std::string format_baseline_recalls(const EvalReport& report, std::size_t k) {
  std::string out = "class,recall\n";
  for (const auto& [cls, r] : report.recall.at(k)) out += cls + "," + io::format_double(r) + "\n";
  return out;
}

}  // namespace geoprompt

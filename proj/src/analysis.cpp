#include "geoprompt/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>

#include "geoprompt/io_util.hpp"

namespace geoprompt {

double avg_class_embedding_distance(const ClassEmbeddings& a, const ClassEmbeddings& b) {
  if (a.empty()) throw Error(ErrorKind::EmptyList, "no class embeddings");
  if (a.size() != b.size()) throw Error(ErrorKind::ClassSetMismatch, "class counts differ");
  double sum = 0.0;
  for (const auto& [cls, va] : a) {
    const auto it = b.find(cls);
    if (it == b.end()) throw Error(ErrorKind::ClassSetMismatch, "class '" + cls + "' missing");
    sum += 1.0 - cosine_sim(va, it->second);
  }
  return sum / double(a.size());
}

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw Error(ErrorKind::InvalidConfig, "incomplete_beta: a, b must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(lbt);
  // The fraction converges fastest on this side of the mean.
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
  return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) throw Error(ErrorKind::InvalidConfig, "degrees of freedom must be > 0");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y, double alpha) {
  if (x.size() != y.size()) throw Error(ErrorKind::DimensionMismatch, "pearson: x and y lengths differ");
  const std::size_t n = x.size();
  if (n < 3) throw Error(ErrorKind::TooFewPoints, "pearson needs >= 3 points, got " + std::to_string(n));
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw Error(ErrorKind::ZeroVariance, "pearson: constant input");
  PearsonResult r;
  r.n = n;
  r.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = double(n - 2);
  const double denom = 1.0 - r.rho * r.rho;
  const double t = denom > 0.0 ? r.rho * std::sqrt(dof / denom) : std::copysign(INFINITY, r.rho);
  r.p_value = student_t_two_sided_p(t, dof);
  r.significant = r.p_value < alpha;
  return r;
}

CountryStatsTable load_country_stats(const std::filesystem::path& path) {
  const auto lines = io::read_lines(path);
  if (lines.empty()) throw Error(ErrorKind::ParseError, path.string() + ": empty stats file");
  const auto header = io::split(lines[0], ',');
  if (header.size() < 2 || io::trim(header[0]) != "country") {
    throw Error(ErrorKind::ParseError, path.string() + ":1: header must start with 'country'");
  }
  CountryStatsTable t;
  for (std::size_t c = 1; c < header.size(); ++c) t.statistics.emplace_back(io::trim(header[c]));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    const auto cells = io::split(lines[i], ',');
    if (cells.size() != header.size()) throw Error(ErrorKind::ParseError, where + ": wrong column count");
    const std::string country(io::trim(cells[0]));
    if (country.empty()) throw Error(ErrorKind::EmptyField, where + ": country");
    if (t.values.count(country)) throw Error(ErrorKind::DuplicateId, where + ": " + country);
    auto& row = t.values[country];
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const auto cell = io::trim(cells[c]);
      if (cell.empty()) continue;
      double v = 0.0;
      try {
        v = io::parse_double(cell);
      } catch (const Error& e) {
        throw Error(ErrorKind::ParseError, where + ": " + e.what());
      }
      if (!std::isfinite(v)) throw Error(ErrorKind::ParseError, where + ": non-finite value");
      row[t.statistics[c - 1]] = v;
    }
  }
  return t;
}

PairDistanceSeries pair_distances(std::vector<std::string> countries,
                                  const std::map<std::string, ClassEmbeddings>& embeddings) {
  std::sort(countries.begin(), countries.end());
  if (std::adjacent_find(countries.begin(), countries.end()) != countries.end()) {
    throw Error(ErrorKind::DuplicateId, "country listed twice");
  }
  PairDistanceSeries s;
  for (std::size_t i = 0; i < countries.size(); ++i) {
    for (std::size_t j = i + 1; j < countries.size(); ++j) {
      const auto a = embeddings.find(countries[i]);
      const auto b = embeddings.find(countries[j]);
      if (a == embeddings.end() || b == embeddings.end()) {
        throw Error(ErrorKind::NotFound, "no class embeddings for " +
                                             (a == embeddings.end() ? countries[i] : countries[j]));
      }
      s.pairs.emplace_back(countries[i], countries[j]);
      s.distance.push_back(avg_class_embedding_distance(a->second, b->second));
    }
  }
  return s;
}

StatCorrelation stat_correlation(const std::vector<std::string>& countries, const CountryStats& stats,
                                 const std::map<std::string, ClassEmbeddings>& embeddings,
                                 const std::vector<std::string>& statistics) {
  if (countries.size() < 3) throw Error(ErrorKind::TooFewPoints, "need >= 3 countries");
  const PairDistanceSeries series = pair_distances(countries, embeddings);
  StatCorrelation out;
  out.pairs = series.pairs.size();
  for (const auto& stat : statistics) {
    std::vector<double> y;
    y.reserve(series.pairs.size());
    std::string missing;
    const auto value = [&](const std::string& country) -> const double* {
      const auto c = stats.find(country);
      if (c == stats.end()) return nullptr;
      const auto v = c->second.find(stat);
      return v == c->second.end() ? nullptr : &v->second;
    };
    for (const auto& country : countries) {
      if (!value(country)) {
        missing = country;
        break;
      }
    }
    if (!missing.empty()) {
      out.warnings.push_back("statistic '" + stat + "' skipped: no value for " + missing);
      continue;
    }
    for (const auto& [a, b] : series.pairs) y.push_back(std::fabs(*value(a) - *value(b)));
    out.rows.push_back({stat, pearson(series.distance, y)});
  }
  return out;
}

std::map<std::string, ClassEmbeddings> country_class_embeddings(const std::vector<ClassInfo>& classes,
                                                                const std::vector<std::string>& countries,
                                                                PromptStrategy strategy, const DescriptorSet& dset,
                                                                const TextEncoder& text) {
  std::map<std::string, ClassEmbeddings> out;
  for (const auto& country : countries) {
    auto& row = out[country];
    for (const auto& cls : classes) row[cls.name] = class_knowledge(cls, country, strategy, dset, text);
  }
  return out;
}

std::string format_correlation_csv(const std::vector<std::pair<std::string, StatCorrelation>>& by_strategy) {
  std::string out = "statistic";
  std::vector<std::string> stats;
  std::map<std::string, std::map<std::string, PearsonResult>> cells;
  for (const auto& [strategy, corr] : by_strategy) {
    out += "," + strategy;
    for (const auto& row : corr.rows) {
      if (std::find(stats.begin(), stats.end(), row.statistic) == stats.end()) stats.push_back(row.statistic);
      cells[row.statistic][strategy] = row.result;
    }
  }
  out += ",pairs\n";
  const std::size_t pairs = by_strategy.empty() ? 0 : by_strategy.front().second.pairs;
  for (const auto& stat : stats) {
    out += stat;
    for (const auto& [strategy, corr] : by_strategy) {
      const auto it = cells[stat].find(strategy);
      out += ",";
      if (it == cells[stat].end()) continue;
      out += io::format_fixed(it->second.rho, 2);
      if (!it->second.significant) out += "*";
    }
    out += "," + std::to_string(pairs) + "\n";
  }
  return out;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

}  // namespace

std::vector<TopicRow> topic_counts(const DescriptorSet& dset, const std::vector<std::string>& keywords,
                                   const std::map<std::string, std::string>& continent_of) {
  // class -> continent -> countries with an entry
  std::map<std::string, std::map<std::string, std::vector<const DescriptorEntry*>>> grid;
  for (const auto& [key, entry] : dset.entries()) {
    const auto it = continent_of.find(key.second);
    if (it == continent_of.end()) throw Error(ErrorKind::UnmappedCountry, key.second);
    grid[key.first][it->second].push_back(&entry);
  }
  std::vector<TopicRow> rows;
  for (const auto& [cls, by_continent] : grid) {
    for (const auto& kw : keywords) {
      const std::string needle = lower(kw);
      for (const auto& [continent, entries] : by_continent) {
        TopicRow r{cls, kw, continent, 0, 0.0};
        for (const auto* e : entries) {
          const bool hit = std::any_of(e->descriptors.begin(), e->descriptors.end(), [&](const std::string& d) {
            return lower(d).find(needle) != std::string::npos;
          });
          if (hit) ++r.count;
        }
        r.rel = double(r.count) / double(entries.size());
        rows.push_back(std::move(r));
      }
    }
  }
  return rows;
}

std::string format_topic_csv(const std::vector<TopicRow>& rows) {
  std::string out = "class,keyword,continent,count,rel\n";
  for (const auto& r : rows) {
    out += r.class_name + "," + r.keyword + "," + r.continent + "," + std::to_string(r.count) + "," +
           io::format_double(r.rel) + "\n";
  }
  return out;
}

void export_embeddings(const std::vector<ExportRow>& rows, const std::filesystem::path& path) {
  if (rows.empty()) throw Error(ErrorKind::EmptyList, "nothing to export");
  const Eigen::Index dim = rows.front().vector.size();
  std::vector<std::pair<std::string, EmbeddingVec>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.vector.size() != dim) throw Error(ErrorKind::DimensionMismatch, "export rows differ in width");
    out.emplace_back(r.class_name + "__" + r.country + "__" + r.strategy, l2_normalize(r.vector));
  }
  save_embedding_tsv(path, dim, out);
}

}  // namespace geoprompt

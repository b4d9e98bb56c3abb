#include "geoprompt/knowledge.hpp"

#include <algorithm>
#include <atomic>
#include <ctime>
#include <fstream>
#include <set>
#include <thread>
#include <json.hpp>

#include "geoprompt/io_util.hpp"

namespace geoprompt {

namespace {

constexpr std::string_view kExemplar =
    "Q: What are useful features for distinguishing a bathtub in a photo that I took in Japan?\n"
    "A: There are several useful visual features to tell there is a bathtub in a photo that I took in Japan:\n"
    "- short in length and deep\n"
    "- square shape\n"
    "- wooden, plastic, or steel material\n"
    "- white or brown color\n"
    "- benches on side\n"
    "- next to shower\n";

constexpr std::string_view kGeneralExemplar =
    "Q: What are useful features for distinguishing a bathtub in a photo?\n"
    "A: There are several useful visual features to tell there is a bathtub in a photo:\n"
    "- short in length and deep\n"
    "- square shape\n"
    "- wooden, plastic, or steel material\n"
    "- white or brown color\n"
    "- benches on side\n"
    "- next to shower\n";

std::string object_phrase(const std::string& class_name, bool plural) {
  const auto article = article_for(class_name, plural);
  return article.empty() ? class_name : std::string(article) + " " + class_name;
}

void require_field(const std::string& value, const char* what) {
  if (io::trim(value).empty()) throw Error(ErrorKind::EmptyField, std::string("probe prompt: empty ") + what);
}

}  // namespace

std::string build_probe_prompt(const std::string& class_name, const std::string& country, bool plural) {
  require_field(class_name, "category");
  require_field(country, "country");
  std::string out(kExemplar);
  out += "Q: What are useful features for distinguishing " + object_phrase(class_name, plural) +
         " in a photo that I took in " + country + "?\n";
  out += "A: There are several useful visual features to tell there is/are " + class_name +
         " in a photo that I took in " + country + ":";
  return out;
}

std::string build_general_probe_prompt(const std::string& class_name, bool plural) {
  require_field(class_name, "category");
  std::string out(kGeneralExemplar);
  out += "Q: What are useful features for distinguishing " + object_phrase(class_name, plural) + " in a photo?\n";
  out += "A: There are several useful visual features to tell there is/are " + class_name + " in a photo:";
  return out;
}

std::string probe_template_hash() {
  return hex64(fnv1a64(build_probe_prompt("<category>", "<country>")));
}

std::string general_template_hash() { return hex64(fnv1a64(build_general_probe_prompt("<category>"))); }

std::vector<std::string> parse_descriptors(std::string_view llm_text) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& raw : io::split(llm_text, '\n')) {
    auto line = io::trim(raw);
    if (!line.starts_with('-')) continue;
    line.remove_prefix(1);
    const std::string d(io::trim(line));
    if (d.empty() || seen.count(d)) continue;
    seen.insert(d);
    out.push_back(d);
  }
  if (out.empty()) throw Error(ErrorKind::NoDescriptorsFound, "no '-' bulleted lines in completion");
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void validate_entry(const DescriptorEntry& e, const std::string& where) {
  std::set<std::string> seen;
  for (const auto& d : e.descriptors) {
    if (io::trim(d).empty()) throw Error(ErrorKind::SpecInvariantViolated, where + ": blank descriptor");
    if (!seen.insert(d).second) throw Error(ErrorKind::SpecInvariantViolated, where + ": duplicate '" + d + "'");
  }
}

}  // namespace

void DescriptorSet::set(const std::string& class_name, const std::string& geography, DescriptorEntry entry) {
  validate_entry(entry, class_name + "/" + geography);
  by_geo_[{class_name, geography}] = std::move(entry);
}

void DescriptorSet::set_general(const std::string& class_name, DescriptorEntry entry) {
  validate_entry(entry, class_name);
  general_[class_name] = std::move(entry);
}

const DescriptorEntry* DescriptorSet::find(const std::string& class_name, const std::string& geography) const {
  auto it = by_geo_.find({class_name, geography});
  return it == by_geo_.end() ? nullptr : &it->second;
}

const DescriptorEntry* DescriptorSet::find_general(const std::string& class_name) const {
  auto it = general_.find(class_name);
  return it == general_.end() ? nullptr : &it->second;
}

std::string format_cache_line(const std::string& class_name, const std::string& country, const std::string& kind,
                              const DescriptorEntry& entry) {
  nlohmann::ordered_json j;
  j["class"] = class_name;
  j["country"] = country;
  j["strategy"] = kind;
  j["descriptors"] = entry.descriptors;
  j["model"] = entry.model;
  j["template_hash"] = entry.template_hash;
  j["acquired_at"] = entry.acquired_at;
  return j.dump() + "\n";
}

namespace {

void load_into(const std::filesystem::path& path, DescriptorSet& set) {
  const auto lines = io::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    try {
      const auto j = nlohmann::json::parse(lines[i]);
      DescriptorEntry e;
      e.descriptors = j.at("descriptors").get<std::vector<std::string>>();
      e.model = j.value("model", "");
      e.template_hash = j.value("template_hash", "");
      e.acquired_at = j.value("acquired_at", "");
      const auto cls = j.at("class").get<std::string>();
      const auto kind = j.value("strategy", std::string(kCountryDescriptorKind));
      if (kind == kGeneralDescriptorKind) {
        set.set_general(cls, std::move(e));
      } else if (kind == kCountryDescriptorKind) {
        set.set(cls, j.at("country").get<std::string>(), std::move(e));
      } else {
        throw Error(ErrorKind::ParseError, where + ": unknown strategy '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseError, where + ": " + e.what());
    }
  }
}

}  // namespace

DescriptorSet load_descriptor_cache(const std::filesystem::path& path) {
  DescriptorSet set;
  load_into(path, set);
  return set;
}

std::string format_descriptor_cache(const DescriptorSet& set) {
  std::string out;
  for (const auto& [cls, e] : set.general()) out += format_cache_line(cls, "", kGeneralDescriptorKind, e);
  for (const auto& [key, e] : set.entries()) out += format_cache_line(key.first, key.second, kCountryDescriptorKind, e);
  return out;
}

void save_descriptor_cache(const std::filesystem::path& path, const DescriptorSet& set) {
  io::write_file(path, format_descriptor_cache(set));
}

DescriptorCache::DescriptorCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!path_.empty() && std::filesystem::exists(path_)) load_into(path_, set_);
}

std::optional<DescriptorEntry> DescriptorCache::get(const std::string& class_name, const std::string& country,
                                                    const std::string& kind) const {
  std::lock_guard lock(mu_);
  const DescriptorEntry* e = kind == kGeneralDescriptorKind ? set_.find_general(class_name)
                                                            : set_.find(class_name, country);
  if (!e) return std::nullopt;
  return *e;
}

void DescriptorCache::put(const std::string& class_name, const std::string& country, const std::string& kind,
                          const DescriptorEntry& entry) {
  std::lock_guard lock(mu_);
  if (kind == kGeneralDescriptorKind) {
    set_.set_general(class_name, entry);
  } else {
    set_.set(class_name, country, entry);
  }
  if (path_.empty()) return;
  std::error_code ec;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path(), ec);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot append to " + path_.string());
  out << format_cache_line(class_name, country, kind, entry);
}

DescriptorSet DescriptorCache::snapshot() const {
  std::lock_guard lock(mu_);
  return set_;
}

// ---------------------------------------------------------------------------

void LlmClientConfig::validate() const {
  if (max_tokens <= 0) throw Error(ErrorKind::InvalidConfig, "max_tokens must be > 0");
  if (!(temperature >= 0.0)) throw Error(ErrorKind::InvalidConfig, "temperature must be >= 0");
  if (retry.max_attempts < 1) throw Error(ErrorKind::InvalidConfig, "retry.max_attempts must be >= 1");
  if (retry.multiplier < 1.0) throw Error(ErrorKind::InvalidConfig, "retry.multiplier must be >= 1");
}

std::string LlmClientConfig::request_body(const std::string& prompt) const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["prompt"] = prompt;
  j["max_tokens"] = max_tokens;
  j["temperature"] = temperature;
  return j.dump();
}

LlmClientConfig LlmClientConfig::from_env() {
  LlmClientConfig c;
  if (const char* e = std::getenv("GEOPROMPT_LLM_ENDPOINT")) c.endpoint = e;
  if (const char* k = std::getenv("GEOPROMPT_LLM_KEY")) c.api_key = k;
  return c;
}

std::filesystem::path MockTransport::fixture_name(const std::string& class_name, const std::string& country) {
  return class_name + "__" + (country.empty() ? std::string("general") : country) + ".txt";
}

std::string MockTransport::complete(const CompletionRequest& request) {
  {
    std::lock_guard lock(mu_);
    ++calls_;
  }
  const auto path = dir_ / fixture_name(request.class_name, request.country);
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::NetworkError, "no fixture " + path.string());
  }
  return io::read_file(path);
}

std::size_t MockTransport::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::string with_retry(const std::function<std::string()>& fn, const RetryPolicy& policy, const Sleeper& sleep) {
  auto backoff = policy.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NetworkError || attempt >= policy.max_attempts) throw;
    }
    if (sleep) sleep(backoff);
    backoff = std::min(policy.max_backoff,
                       std::chrono::milliseconds(static_cast<long long>(double(backoff.count()) * policy.multiplier)));
  }
}

GeographySet::GeographySet(std::vector<std::string> names, Role r) : ids(std::move(names)), role(r) {
  if (ids.empty()) throw Error(ErrorKind::EmptyList, "geography set is empty");
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (io::trim(id).empty()) throw Error(ErrorKind::EmptyField, "blank geography name");
    if (!seen.insert(id).second) throw Error(ErrorKind::DuplicateId, "geography '" + id + "'");
  }
}

std::string GeographySet::hash() const {
  std::uint64_t h = fnv1a64("geography-set");
  for (const auto& id : ids) {
    h = fnv1a64(id, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
  }
  return hex64(h);
}

std::string utc_timestamp_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

struct Job {
  const ClassInfo* cls;
  std::string country;  // empty for general
};

AcquireResult run_jobs(const std::vector<Job>& jobs, Transport& transport, const LlmClientConfig& client,
                       DescriptorCache& cache, const AcquireOptions& options) {
  client.validate();
  const Sleeper sleep = options.sleep ? options.sleep : Sleeper([](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  });
  const auto clock = options.clock ? options.clock : std::function<std::string()>(utc_timestamp_now);

  std::vector<std::optional<DescriptorEntry>> entries(jobs.size());
  std::vector<std::optional<AcquireFailure>> failures(jobs.size());
  std::atomic<std::size_t> requests{0};
  std::atomic<std::size_t> next{0};

  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      const bool general = job.country.empty();
      const std::string kind = general ? kGeneralDescriptorKind : kCountryDescriptorKind;
      if (auto hit = cache.get(job.cls->name, job.country, kind)) {
        entries[i] = std::move(*hit);
        continue;
      }
      CompletionRequest req;
      req.class_name = job.cls->name;
      req.country = job.country;
      req.prompt = general ? build_general_probe_prompt(job.cls->name, job.cls->plural)
                           : build_probe_prompt(job.cls->name, job.country, job.cls->plural);
      try {
        const std::string text = with_retry(
            [&] {
              ++requests;
              return transport.complete(req);
            },
            client.retry, sleep);
        DescriptorEntry e;
        e.descriptors = parse_descriptors(text);
        e.model = client.model;
        e.template_hash = general ? general_template_hash() : probe_template_hash();
        e.acquired_at = clock();
        cache.put(job.cls->name, job.country, kind, e);
        entries[i] = std::move(e);
      } catch (const Error& err) {
        failures[i] = AcquireFailure{job.cls->name, job.country, err.kind(), err.what()};
      }
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.parallelism, jobs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  AcquireResult result;
  result.requests = requests.load();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (entries[i]) {
      if (jobs[i].country.empty()) {
        result.descriptors.set_general(jobs[i].cls->name, std::move(*entries[i]));
      } else {
        result.descriptors.set(jobs[i].cls->name, jobs[i].country, std::move(*entries[i]));
      }
    }
    if (failures[i]) result.failures.push_back(std::move(*failures[i]));
  }
  return result;
}

}  // namespace

AcquireResult acquire(const std::vector<ClassInfo>& classes, const GeographySet& geographies, Transport& transport,
                      const LlmClientConfig& client, DescriptorCache& cache, const AcquireOptions& options) {
  std::vector<Job> jobs;
  for (const auto& c : classes) {
    for (const auto& g : geographies.ids) jobs.push_back({&c, g});
  }
  return run_jobs(jobs, transport, client, cache, options);
}

AcquireResult acquire_general(const std::vector<ClassInfo>& classes, Transport& transport,
                              const LlmClientConfig& client, DescriptorCache& cache, const AcquireOptions& options) {
  std::vector<Job> jobs;
  for (const auto& c : classes) jobs.push_back({&c, ""});
  return run_jobs(jobs, transport, client, cache, options);
}

// ---------------------------------------------------------------------------

EmbeddingVec class_knowledge(const ClassInfo& cls, const std::string& geography, PromptStrategy strategy,
                             const DescriptorSet& dset, const TextEncoder& text) {
  std::vector<EmbeddingVec> embeddings;
  switch (strategy) {
    case PromptStrategy::CountryInPrompt:
      embeddings.push_back(embed_prompt({strategy, cls.name, geography, std::nullopt, cls.plural}, text));
      break;
    case PromptStrategy::CountryLLM:
    case PromptStrategy::CountryInPromptPlusLLM: {
      const DescriptorEntry* e = dset.find(cls.name, geography);
      if (!e || e->descriptors.empty()) {
        throw Error(ErrorKind::MissingDescriptors, cls.name + " / " + geography);
      }
      for (const auto& d : e->descriptors) {
        embeddings.push_back(embed_prompt({strategy, cls.name, geography, d, cls.plural}, text));
      }
      break;
    }
    default:
      throw Error(ErrorKind::InvalidConfig,
                  "class knowledge needs a geography strategy, got " + std::string(to_string(strategy)));
  }
  EmbeddingVec k = mean_vectors(embeddings);
  if (!(k.norm() > kKnowledgeNormFloor)) {
    throw Error(ErrorKind::NearZeroNorm, "knowledge for " + cls.name + " / " + geography + " collapsed");
  }
  return k;
}

EmbeddingVec target_knowledge(const ClassInfo& cls, const GeographySet& geographies, PromptStrategy strategy,
                              const DescriptorSet& dset, const TextEncoder& text) {
  if (geographies.ids.empty()) throw Error(ErrorKind::EmptyList, "target geography set is empty");
  std::vector<EmbeddingVec> per_geo;
  per_geo.reserve(geographies.ids.size());
  for (const auto& g : geographies.ids) per_geo.push_back(class_knowledge(cls, g, strategy, dset, text));
  EmbeddingVec k = mean_vectors(per_geo);
  if (!(k.norm() > kKnowledgeNormFloor)) {
    throw Error(ErrorKind::NearZeroNorm, "target knowledge for " + cls.name + " collapsed");
  }
  return k;
}

const EmbeddingVec& KnowledgeCache::target(const ClassInfo& cls, const GeographySet& geographies,
                                           PromptStrategy strategy, const DescriptorSet& dset,
                                           const TextEncoder& text) {
  const std::string key = cls.name + '\x1f' + std::string(to_string(strategy)) + '\x1f' + geographies.hash() +
                          '\x1f' + hex64(text.model.fingerprint());
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    it = cache_.emplace(key, target_knowledge(cls, geographies, strategy, dset, text)).first;
  }
  return it->second;
}

}  // namespace geoprompt

#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "geoprompt/prompting.hpp"

namespace geoprompt {

// ---------------------------------------------------------------------------
// Probe prompt and response parsing

// One-shot probe: the Japan/bathtub exemplar followed by the question for
// (class, country) and an open answer stem the LLM continues.
std::string build_probe_prompt(const std::string& class_name, const std::string& country, bool plural = false);

// Country-agnostic variant for GeneralLLM descriptor lists: same exemplar and
// stem with "that I took in <country>" removed.
std::string build_general_probe_prompt(const std::string& class_name, bool plural = false);

// Hash of the probe template text; recorded with every cached entry.
std::string probe_template_hash();
std::string general_template_hash();

// Bulleted lines ("- ...") become descriptors; trimmed, empties dropped,
// duplicates removed keeping the first. Throws NoDescriptorsFound.
std::vector<std::string> parse_descriptors(std::string_view llm_text);

// ---------------------------------------------------------------------------
// Descriptor storage

inline constexpr const char* kCountryDescriptorKind = "country_llm";
inline constexpr const char* kGeneralDescriptorKind = "general_llm";

struct DescriptorEntry {
  std::vector<std::string> descriptors;
  std::string model;
  std::string template_hash;
  std::string acquired_at;

  bool operator==(const DescriptorEntry&) const = default;
};

// D_g(c) per (class, geography) plus the geography-agnostic D(c).
class DescriptorSet {
 public:
  void set(const std::string& class_name, const std::string& geography, DescriptorEntry entry);
  void set_general(const std::string& class_name, DescriptorEntry entry);

  const DescriptorEntry* find(const std::string& class_name, const std::string& geography) const;
  const DescriptorEntry* find_general(const std::string& class_name) const;

  const std::map<std::pair<std::string, std::string>, DescriptorEntry>& entries() const { return by_geo_; }
  const std::map<std::string, DescriptorEntry>& general() const { return general_; }

  bool operator==(const DescriptorSet&) const = default;

 private:
  std::map<std::pair<std::string, std::string>, DescriptorEntry> by_geo_;
  std::map<std::string, DescriptorEntry> general_;
};

// JSON-lines cache, one entry per line:
// {"class","country","strategy","descriptors","model","template_hash","acquired_at"}.
// General entries use strategy "general_llm" and an empty country.
std::string format_cache_line(const std::string& class_name, const std::string& country, const std::string& kind,
                              const DescriptorEntry& entry);
DescriptorSet load_descriptor_cache(const std::filesystem::path& path);
std::string format_descriptor_cache(const DescriptorSet& set);
void save_descriptor_cache(const std::filesystem::path& path, const DescriptorSet& set);

// Thread-safe append-through cache backed by a JSON-lines file (later lines
// win on reload). An empty path keeps everything in memory.
class DescriptorCache {
 public:
  explicit DescriptorCache(std::filesystem::path path = {});

  std::optional<DescriptorEntry> get(const std::string& class_name, const std::string& country,
                                     const std::string& kind) const;
  void put(const std::string& class_name, const std::string& country, const std::string& kind,
           const DescriptorEntry& entry);
  DescriptorSet snapshot() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  DescriptorSet set_;
};

// ---------------------------------------------------------------------------
// LLM access

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};
};

struct LlmClientConfig {
  std::string endpoint;
  std::string api_key;
  std::string model = "text-davinci-003";
  int max_tokens = 100;
  double temperature = 0.7;
  // JSON pointer to the completion text in the response body.
  std::string completion_path = "/choices/0/text";
  RetryPolicy retry;
  int timeout_seconds = 60;

  void validate() const;
  // Request body {"model","prompt","max_tokens","temperature"}.
  std::string request_body(const std::string& prompt) const;
  // Fills endpoint/key from GEOPROMPT_LLM_ENDPOINT / GEOPROMPT_LLM_KEY.
  static LlmClientConfig from_env();
};

struct CompletionRequest {
  std::string prompt;
  std::string class_name;
  std::string country;  // empty for general descriptors
};

class Transport {
 public:
  virtual ~Transport() = default;
  // Returns the raw completion text; throws Error(NetworkError) on failure.
  virtual std::string complete(const CompletionRequest& request) = 0;
};

// Offline transport: <dir>/<class>__<country>.txt (or <class>__general.txt).
class MockTransport : public Transport {
 public:
  explicit MockTransport(std::filesystem::path fixture_dir) : dir_(std::move(fixture_dir)) {}
  std::string complete(const CompletionRequest& request) override;
  std::size_t calls() const;

  static std::filesystem::path fixture_name(const std::string& class_name, const std::string& country);

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
};

// HTTP POST of LlmClientConfig::request_body with a bearer token.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(LlmClientConfig config);
  std::string complete(const CompletionRequest& request) override;

  // Extracts the completion text from a response body using the configured path.
  static std::string extract_completion(const std::string& body, const std::string& json_pointer);

 private:
  LlmClientConfig config_;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

// Calls fn until it succeeds or the policy is exhausted. Only NetworkError is
// retried; the final NetworkError is rethrown.
std::string with_retry(const std::function<std::string()>& fn, const RetryPolicy& policy, const Sleeper& sleep);

struct AcquireFailure {
  std::string class_name;
  std::string country;  // empty for general descriptors
  ErrorKind kind;
  std::string message;
};

struct AcquireOptions {
  std::size_t parallelism = 1;
  Sleeper sleep;                               // default: std::this_thread::sleep_for
  std::function<std::string()> clock;          // default: UTC ISO-8601 now
};

struct AcquireResult {
  DescriptorSet descriptors;
  std::vector<AcquireFailure> failures;
  std::size_t requests = 0;  // transport calls made, retries included
};

struct GeographySet {
  enum class Role { Source, Target, All };
  std::vector<std::string> ids;
  Role role = Role::All;

  GeographySet() = default;
  GeographySet(std::vector<std::string> names, Role r);
  std::string hash() const;
};

// For each (class, country) not cached: probe, parse, persist. Failures are
// collected per pair; the batch never aborts.
AcquireResult acquire(const std::vector<ClassInfo>& classes, const GeographySet& geographies, Transport& transport,
                      const LlmClientConfig& client, DescriptorCache& cache, const AcquireOptions& options = {});

// Same for the geography-agnostic D(c).
AcquireResult acquire_general(const std::vector<ClassInfo>& classes, Transport& transport,
                              const LlmClientConfig& client, DescriptorCache& cache,
                              const AcquireOptions& options = {});

std::string utc_timestamp_now();

// ---------------------------------------------------------------------------
// Knowledge vectors

inline constexpr double kKnowledgeNormFloor = 1e-9;

// k_c^g: mean prompt embedding over D_g(c) for the descriptor strategies, or
// the single country prompt for CountryInPrompt.
EmbeddingVec class_knowledge(const ClassInfo& cls, const std::string& geography, PromptStrategy strategy,
                             const DescriptorSet& dset, const TextEncoder& text);

// k_c^tgt: mean of k_c^g over the geography set (not re-normalized).
EmbeddingVec target_knowledge(const ClassInfo& cls, const GeographySet& geographies, PromptStrategy strategy,
                              const DescriptorSet& dset, const TextEncoder& text);

// Memoizes target knowledge by (class, strategy, geography-set hash, encoder
// fingerprint).
class KnowledgeCache {
 public:
  const EmbeddingVec& target(const ClassInfo& cls, const GeographySet& geographies, PromptStrategy strategy,
                             const DescriptorSet& dset, const TextEncoder& text);
  std::size_t size() const { return cache_.size(); }

 private:
  std::map<std::string, EmbeddingVec> cache_;
};

}  // namespace geoprompt

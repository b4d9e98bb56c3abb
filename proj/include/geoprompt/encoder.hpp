#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "geoprompt/embedcore.hpp"

namespace geoprompt {

struct HardToken {
  std::size_t id = 0;
};

struct SoftToken {
  EmbeddingVec vector;
};

using TokenRow = std::variant<HardToken, SoftToken>;

// Word -> row of the token embedding table. Id 0 is always the unknown token.
class Vocab {
 public:
  static constexpr std::size_t kUnkId = 0;
  static constexpr const char* kUnkToken = "<unk>";

  Vocab();

  // Returns the existing id if the token is already present.
  std::size_t add(const std::string& token);
  std::size_t id_of(const std::string& token) const;  // kUnkId when absent
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

// Stand-in for the text encoder h: mean-pool the token rows, apply an affine
// map, L2-normalize. The token table is frozen; only soft tokens get gradients.
struct ToyTextEncoder {
  Matrix token_table;   // V x D_in
  Matrix projection;    // D x D_in
  EmbeddingVec bias;    // D

  Eigen::Index input_dim() const { return token_table.cols(); }
  Eigen::Index output_dim() const { return projection.rows(); }
  std::size_t vocab_size() const { return static_cast<std::size_t>(token_table.rows()); }

  // Fingerprint of all parameters; keys cached knowledge vectors.
  std::uint64_t fingerprint() const;

  static ToyTextEncoder with_identity_projection(Matrix token_table);
  static ToyTextEncoder random(std::size_t vocab_size, Eigen::Index input_dim, Eigen::Index output_dim, Rng& rng);
};

// Vocabulary plus the encoder whose table rows it indexes.
struct TextEncoder {
  Vocab vocab;
  ToyTextEncoder model;
};

EmbeddingVec encode_text(const ToyTextEncoder& enc, const std::vector<TokenRow>& rows);

// Vector-Jacobian product of encode_text with respect to every SoftToken row,
// in order of appearance. HardToken rows receive no gradient.
std::vector<EmbeddingVec> encode_text_vjp(const ToyTextEncoder& enc, const std::vector<TokenRow>& rows,
                                          const EmbeddingVec& upstream);

// Precomputed embeddings keyed by id; every vector is unit-norm.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(Eigen::Index dim = 0) : dim_(dim) {}

  Eigen::Index dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& id) const { return entries_.count(id) > 0; }
  const EmbeddingVec& at(const std::string& id) const;
  const std::map<std::string, EmbeddingVec>& entries() const { return entries_; }

  // Normalizes on insert. Throws DuplicateId / DimensionMismatch.
  void insert(const std::string& id, const EmbeddingVec& v);

 private:
  Eigen::Index dim_;
  std::map<std::string, EmbeddingVec> entries_;
};

// TSV: "dim=<D>" header, then "<id>\t<v1>...\t<vD>" rows; '#' comments.
EmbeddingStore load_embedding_store(const std::filesystem::path& path);

// Rows in the given order; values written with round-trip precision.
std::string format_embedding_tsv(Eigen::Index dim, const std::vector<std::pair<std::string, EmbeddingVec>>& rows);
void save_embedding_tsv(const std::filesystem::path& path, Eigen::Index dim,
                        const std::vector<std::pair<std::string, EmbeddingVec>>& rows);

// Vocabulary file: same TSV layout as the store, rows are token embeddings.
// Vectors are kept verbatim (zero rows are legal). Row order defines ids and
// the first row must be the unknown token.
TextEncoder load_vocab_encoder(const std::filesystem::path& path);
void save_vocab(const std::filesystem::path& path, const Vocab& vocab, const Matrix& token_table);

}  // namespace geoprompt

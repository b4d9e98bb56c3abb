#include "geoprompt/encoder.hpp"

#include <set>

#include "geoprompt/io_util.hpp"

namespace geoprompt {

Vocab::Vocab() { add(kUnkToken); }

std::size_t Vocab::add(const std::string& token) {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  const std::size_t id = tokens_.size();
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

std::size_t Vocab::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

std::uint64_t ToyTextEncoder::fingerprint() const {
  std::uint64_t h = fnv1a64("toy-text-encoder");
  const auto mix = [&h](const Matrix& m) {
    const Eigen::Index dims[2] = {m.rows(), m.cols()};
    h = fnv1a64(dims, sizeof dims, h);
    h = fnv1a64(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()), h);
  };
  mix(token_table);
  mix(projection);
  mix(bias);
  return h;
}

ToyTextEncoder ToyTextEncoder::with_identity_projection(Matrix token_table) {
  const auto d = token_table.cols();
  return ToyTextEncoder{std::move(token_table), Matrix::Identity(d, d), EmbeddingVec::Zero(d)};
}

ToyTextEncoder ToyTextEncoder::random(std::size_t vocab_size, Eigen::Index input_dim, Eigen::Index output_dim,
                                      Rng& rng) {
  ToyTextEncoder enc;
  enc.token_table = gaussian_matrix(static_cast<Eigen::Index>(vocab_size), input_dim, 1.0, rng);
  enc.projection = gaussian_matrix(output_dim, input_dim, 1.0 / std::sqrt(double(input_dim)), rng);
  enc.bias = gaussian_matrix(output_dim, 1, 0.1, rng);
  return enc;
}

namespace {

struct Forward {
  EmbeddingVec z;
  double z_norm = 0.0;
  std::size_t count = 0;
};

Forward forward(const ToyTextEncoder& enc, const std::vector<TokenRow>& rows) {
  if (rows.empty()) throw Error(ErrorKind::EmptyInput, "encode_text: no token rows");
  EmbeddingVec pooled = EmbeddingVec::Zero(enc.input_dim());
  for (const auto& row : rows) {
    if (const auto* hard = std::get_if<HardToken>(&row)) {
      if (hard->id >= enc.vocab_size()) {
        throw Error(ErrorKind::BadTokenId,
                    "token id " + std::to_string(hard->id) + " >= vocab size " + std::to_string(enc.vocab_size()));
      }
      pooled += enc.token_table.row(static_cast<Eigen::Index>(hard->id)).transpose();
    } else {
      const auto& soft = std::get<SoftToken>(row).vector;
      if (soft.size() != enc.input_dim()) {
        throw Error(ErrorKind::DimensionMismatch, "soft token width " + std::to_string(soft.size()));
      }
      pooled += soft;
    }
  }
  pooled /= double(rows.size());
  Forward f;
  f.z = enc.projection * pooled + enc.bias;
  f.z_norm = f.z.norm();
  f.count = rows.size();
  if (!(f.z_norm > kNormEpsilon)) throw Error(ErrorKind::NearZeroNorm, "encode_text: affine output collapsed");
  return f;
}

}  // namespace

EmbeddingVec encode_text(const ToyTextEncoder& enc, const std::vector<TokenRow>& rows) {
  const Forward f = forward(enc, rows);
  return f.z / f.z_norm;
}

std::vector<EmbeddingVec> encode_text_vjp(const ToyTextEncoder& enc, const std::vector<TokenRow>& rows,
                                          const EmbeddingVec& upstream) {
  const Forward f = forward(enc, rows);
  if (upstream.size() != enc.output_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "encode_text_vjp: upstream width");
  }
  // d(z/|z|)/dz = (I - y y^T) / |z|
  const EmbeddingVec y = f.z / f.z_norm;
  const EmbeddingVec grad_z = (upstream - y * y.dot(upstream)) / f.z_norm;
  const EmbeddingVec grad_row = enc.projection.transpose() * grad_z / double(f.count);

  std::vector<EmbeddingVec> grads;
  for (const auto& row : rows) {
    if (std::holds_alternative<SoftToken>(row)) grads.push_back(grad_row);
  }
  return grads;
}

const EmbeddingVec& EmbeddingStore::at(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw Error(ErrorKind::NotFound, "embedding id '" + id + "'");
  return it->second;
}

void EmbeddingStore::insert(const std::string& id, const EmbeddingVec& v) {
  if (dim_ == 0) dim_ = v.size();
  if (v.size() != dim_) {
    throw Error(ErrorKind::DimensionMismatch, "id '" + id + "' has " + std::to_string(v.size()) + " values");
  }
  if (!v.allFinite()) throw Error(ErrorKind::ParseError, "id '" + id + "' has non-finite values");
  if (entries_.count(id)) throw Error(ErrorKind::DuplicateId, id);
  entries_.emplace(id, l2_normalize(v));
}

namespace {

struct TsvRow {
  std::size_t line = 0;
  std::string id;
  EmbeddingVec values;
};

struct TsvTable {
  Eigen::Index dim = 0;
  std::vector<TsvRow> rows;
};

TsvTable parse_tsv(const std::filesystem::path& path) {
  const auto lines = io::read_lines(path);
  TsvTable table;
  bool have_header = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    const std::string& line = lines[i];
    if (line.empty() || line.front() == '#') continue;
    if (!have_header) {
      if (!line.starts_with("dim=")) {
        throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": expected dim=<D>");
      }
      double d = 0;
      try {
        d = io::parse_double(std::string_view(line).substr(4));
      } catch (const Error&) {
        throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": bad dim");
      }
      if (d < 1 || d != std::floor(d)) {
        throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": bad dim");
      }
      table.dim = static_cast<Eigen::Index>(d);
      have_header = true;
      continue;
    }
    const auto fields = io::split(line, '\t');
    if (static_cast<Eigen::Index>(fields.size()) != table.dim + 1) {
      throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                             std::to_string(table.dim) + " values, got " +
                                             std::to_string(fields.size() - 1));
    }
    TsvRow row;
    row.line = lineno;
    row.id = fields[0];
    row.values.resize(table.dim);
    for (Eigen::Index k = 0; k < table.dim; ++k) {
      try {
        row.values[k] = io::parse_double(fields[static_cast<std::size_t>(k) + 1]);
      } catch (const Error&) {
        throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": bad value '" +
                                               fields[static_cast<std::size_t>(k) + 1] + "'");
      }
    }
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw Error(ErrorKind::ParseError, path.string() + ": missing dim header");
  return table;
}

}  // namespace

EmbeddingStore load_embedding_store(const std::filesystem::path& path) {
  TsvTable table = parse_tsv(path);
  EmbeddingStore store(table.dim);
  for (const auto& row : table.rows) {
    if (store.contains(row.id)) {
      throw Error(ErrorKind::DuplicateId, path.string() + ":" + std::to_string(row.line) + ": " + row.id);
    }
    try {
      store.insert(row.id, row.values);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NearZeroNorm) throw;
      throw Error(ErrorKind::NearZeroNorm, path.string() + ":" + std::to_string(row.line) + ": zero vector");
    }
  }
  return store;
}

std::string format_embedding_tsv(Eigen::Index dim, const std::vector<std::pair<std::string, EmbeddingVec>>& rows) {
  std::string out = "dim=" + std::to_string(dim) + "\n";
  for (const auto& [id, v] : rows) {
    if (v.size() != dim) throw Error(ErrorKind::DimensionMismatch, "row '" + id + "'");
    out += id;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      out += '\t';
      out += io::format_double(v[k]);
    }
    out += '\n';
  }
  return out;
}

void save_embedding_tsv(const std::filesystem::path& path, Eigen::Index dim,
                        const std::vector<std::pair<std::string, EmbeddingVec>>& rows) {
  io::write_file(path, format_embedding_tsv(dim, rows));
}

TextEncoder load_vocab_encoder(const std::filesystem::path& path) {
  TsvTable table = parse_tsv(path);
  if (table.rows.empty() || table.rows.front().id != Vocab::kUnkToken) {
    throw Error(ErrorKind::ParseError, path.string() + ": first row must be " + Vocab::kUnkToken);
  }
  TextEncoder out;
  Matrix token_table(static_cast<Eigen::Index>(table.rows.size()), table.dim);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (i > 0) {
      if (out.vocab.contains(row.id)) {
        throw Error(ErrorKind::DuplicateId, path.string() + ":" + std::to_string(row.line) + ": " + row.id);
      }
      out.vocab.add(row.id);
    }
    token_table.row(static_cast<Eigen::Index>(i)) = row.values.transpose();
  }
  out.model = ToyTextEncoder::with_identity_projection(std::move(token_table));
  return out;
}

void save_vocab(const std::filesystem::path& path, const Vocab& vocab, const Matrix& token_table) {
  if (static_cast<std::size_t>(token_table.rows()) != vocab.size()) {
    throw Error(ErrorKind::DimensionMismatch, "vocab/table row count");
  }
  std::vector<std::pair<std::string, EmbeddingVec>> rows;
  rows.reserve(vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    rows.emplace_back(vocab.token(i), token_table.row(static_cast<Eigen::Index>(i)).transpose());
  }
  save_embedding_tsv(path, token_table.cols(), rows);
}

}  // namespace geoprompt

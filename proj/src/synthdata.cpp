#include "geoprompt/synthdata.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "geoprompt/io_util.hpp"
#include "geoprompt/softprompt.hpp"

namespace geoprompt {

namespace {

constexpr const char* kClassNouns[] = {"stove",  "bathtub", "toilet", "bed",   "sofa",  "toothbrush", "cup",
                                       "plate",  "spoon",   "door",   "roof",  "chair", "table",      "bicycle",
                                       "lamp",   "window",  "sink",   "broom", "pot",   "shoe"};
constexpr const char* kContinents[] = {"Europe", "Africa", "Asia", "Americas"};
constexpr const char* kIncome[] = {"low", "medium", "high"};
constexpr const char* kFillerWords[] = {"a", "an", "photo", "of", "in", "which", "has"};
constexpr double kFidelityFloor = 0.7;
constexpr double kOrthogonalityTol = 1e-9;

std::string class_noun(std::size_t c) {
  constexpr std::size_t n = std::size(kClassNouns);
  return c < n ? kClassNouns[c] : "object" + std::to_string(c);
}

std::size_t single_token(const std::string& text, const Vocab& vocab) {
  const auto toks = tokenize(text, vocab);
  if (toks.size() != 1 || toks[0].id == Vocab::kUnkId) {
    throw Error(ErrorKind::SpecInvariantViolated, "'" + text + "' does not tokenize to one known word");
  }
  return toks[0].id;
}

DescriptorEntry synth_entry(std::string descriptor, std::string template_hash) {
  return DescriptorEntry{{std::move(descriptor)}, "synthetic", std::move(template_hash), "1970-01-01T00:00:00Z"};
}

// Token table for the world's vocabulary. `scales[g]` multiplies every
// geography-specific row of geography g.
Matrix token_table(const SynthWorld& w, const std::vector<double>& scales) {
  const auto& cfg = w.config;
  const auto& vocab = w.text.vocab;
  Matrix table = Matrix::Zero(static_cast<Eigen::Index>(vocab.size()), cfg.input_dim);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    table.row(static_cast<Eigen::Index>(single_token(w.classes[c].name, vocab))) = w.class_dirs.row(ci);
    Eigen::RowVectorXd general = Eigen::RowVectorXd::Zero(cfg.input_dim);
    for (std::size_t g = 0; g < cfg.geographies.size(); ++g) {
      const Eigen::RowVectorXd shift = scales[g] * w.shift_dirs[g].row(ci);
      table.row(static_cast<Eigen::Index>(single_token(synth_descriptor(g, c), vocab))) = shift;
      general += shift / double(cfg.geographies.size());
    }
    table.row(static_cast<Eigen::Index>(single_token(synth_general_descriptor(c), vocab))) = general;
  }
  for (std::size_t g = 0; g < cfg.geographies.size(); ++g) {
    table.row(static_cast<Eigen::Index>(single_token(cfg.geographies[g].name, vocab))) =
        scales[g] * w.shift_dirs[g].colwise().mean();
  }
  return table;
}

}  // namespace

std::string synth_descriptor(std::size_t geo, std::size_t cls) {
  return "geo_" + std::to_string(geo) + "_cls_" + std::to_string(cls) + "_feat";
}

std::string synth_general_descriptor(std::size_t cls) { return "cls_" + std::to_string(cls) + "_feat"; }

void SynthConfig::validate() const {
  const auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (geographies.empty()) fail("at least one geography is required");
  if (samples_per_cell < 1) fail("samples_per_cell must be >= 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) fail("sigma must be >= 0");
  if (shots < 1) fail("shots must be >= 1");
  if (!(shared_shift >= 0.0) || !std::isfinite(shared_shift)) fail("shared_shift must be >= 0");
  if (input_dim != dim) fail("input_dim must equal dim (identity synthetic encoder)");
  std::set<std::string> names, words;
  bool any_source = false;
  for (const auto& g : geographies) {
    if (g.name.empty()) fail("geography name is empty");
    if (!names.insert(g.name).second) fail("duplicate geography " + g.name);
    const auto w = split_words(g.name);
    if (w.size() != 1 || !words.insert(w[0]).second) fail("geography name must be one distinct word: " + g.name);
    if (!(g.delta >= 0.0) || !std::isfinite(g.delta)) fail("delta must be >= 0 for " + g.name);
    any_source |= !g.target;
  }
  if (!any_source) fail("at least one source geography is required");
  const auto needed = static_cast<Eigen::Index>(num_classes + num_classes * geographies.size());
  if (dim < needed) {
    throw Error(ErrorKind::DimensionTooSmall, "dim " + std::to_string(dim) + " < N_classes + N_classes*N_geos = " +
                                                  std::to_string(needed));
  }
}

nlohmann::ordered_json SynthConfig::to_json() const {
  nlohmann::ordered_json j;
  j["num_classes"] = num_classes;
  nlohmann::ordered_json geos = nlohmann::ordered_json::array();
  for (const auto& g : geographies) {
    nlohmann::ordered_json e;
    e["name"] = g.name;
    e["delta"] = g.delta;
    e["target"] = g.target;
    geos.push_back(std::move(e));
  }
  j["geographies"] = std::move(geos);
  j["samples_per_cell"] = samples_per_cell;
  j["sigma"] = sigma;
  j["dim"] = dim;
  j["input_dim"] = input_dim;
  j["shots"] = shots;
  j["shared_shift"] = shared_shift;
  j["seed"] = seed;
  return j;
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "synth config must be an object");
  SynthConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "num_classes") c.num_classes = v.get<std::size_t>();
      else if (key == "samples_per_cell") c.samples_per_cell = v.get<std::size_t>();
      else if (key == "sigma") c.sigma = v.get<double>();
      else if (key == "dim") c.dim = v.get<Eigen::Index>();
      else if (key == "input_dim") c.input_dim = v.get<Eigen::Index>();
      else if (key == "shots") c.shots = v.get<std::size_t>();
      else if (key == "shared_shift") c.shared_shift = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "geographies") {
        c.geographies.clear();
        for (const auto& g : v) {
          SynthGeography geo;
          for (const auto& [gk, gv] : g.items()) {
            if (gk == "name") geo.name = gv.get<std::string>();
            else if (gk == "delta") geo.delta = gv.get<double>();
            else if (gk == "target") geo.target = gv.get<bool>();
            else throw Error(ErrorKind::InvalidConfig, "unknown geography key '" + gk + "'");
          }
          c.geographies.push_back(std::move(geo));
        }
      } else {
        throw Error(ErrorKind::InvalidConfig, "unknown synth key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

SynthConfig SynthConfig::with_target_delta(double delta) const {
  SynthConfig c = *this;
  for (auto& g : c.geographies) {
    if (g.target) g.delta = delta;
  }
  return c;
}

std::vector<std::string> SynthConfig::source_names() const {
  std::vector<std::string> out;
  for (const auto& g : geographies) {
    if (!g.target) out.push_back(g.name);
  }
  return out;
}

std::vector<std::string> SynthConfig::target_names() const {
  std::vector<std::string> out;
  for (const auto& g : geographies) {
    if (g.target) out.push_back(g.name);
  }
  return out;
}

EmbeddingStore SynthWorld::store() const {
  EmbeddingStore s(features.cols());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    s.insert(manifest[i].id, features.row(static_cast<Eigen::Index>(i)).transpose());
  }
  return s;
}

SynthWorld generate(const SynthConfig& config) {
  config.validate();
  SynthWorld w;
  w.config = config;
  const std::size_t nc = config.num_classes;
  const std::size_t ng = config.geographies.size();
  const Eigen::Index d = config.dim;
  const Rng root(config.seed);

  // Orthonormal basis: first N_c columns are class directions, the next
  // N_c * N_geo are private shift components.
  Rng basis_rng = root.derive(10);
  const Matrix gauss = gaussian_matrix(d, d, 1.0, basis_rng);
  const Matrix q = Eigen::HouseholderQR<Matrix>(gauss).householderQ() * Matrix::Identity(d, d);
  w.class_dirs = q.leftCols(static_cast<Eigen::Index>(nc)).transpose();

  Rng shared_rng = root.derive(11);
  for (std::size_t g = 0; g < ng; ++g) {
    Eigen::VectorXd coeff(static_cast<Eigen::Index>(nc));
    for (Eigen::Index c = 0; c < coeff.size(); ++c) coeff[c] = shared_rng.normal();
    const EmbeddingVec h = w.class_dirs.transpose() * l2_normalize(coeff);
    Matrix v(static_cast<Eigen::Index>(nc), d);
    for (std::size_t c = 0; c < nc; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      const EmbeddingVec u = w.class_dirs.row(ci).transpose();
      EmbeddingVec x = config.shared_shift * h + q.col(static_cast<Eigen::Index>(nc + g * nc + c));
      x -= x.dot(u) * u;
      x = l2_normalize(x);
      if (std::fabs(x.dot(u)) > kOrthogonalityTol) {
        throw Error(ErrorKind::SpecInvariantViolated, "shift direction not orthogonal to its class");
      }
      v.row(ci) = x.transpose();
    }
    w.shift_dirs.push_back(std::move(v));
  }

  for (std::size_t c = 0; c < nc; ++c) w.classes.push_back(ClassInfo{class_noun(c), false, {}});

  // Samples, geography-major then class.
  Rng noise_rng = root.derive(12);
  const std::size_t total = nc * ng * config.samples_per_cell;
  w.features.resize(static_cast<Eigen::Index>(total), d);
  std::vector<bool> is_target;
  std::size_t row = 0;
  for (std::size_t g = 0; g < ng; ++g) {
    const auto& geo = config.geographies[g];
    for (std::size_t c = 0; c < nc; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      for (std::size_t s = 0; s < config.samples_per_cell; ++s, ++row) {
        EmbeddingVec z = w.class_dirs.row(ci).transpose() + geo.delta * w.shift_dirs[g].row(ci).transpose();
        for (Eigen::Index k = 0; k < d; ++k) z[k] += config.sigma * noise_rng.normal();
        w.features.row(static_cast<Eigen::Index>(row)) = l2_normalize(z).transpose();
        char id[16];
        std::snprintf(id, sizeof id, "s%06zu", row);
        w.manifest.push_back(SampleMeta{id, w.classes[c].name, geo.name, kContinents[g % std::size(kContinents)],
                                        kIncome[row % std::size(kIncome)], Split::Target});
        w.labels.push_back(c);
        is_target.push_back(geo.target);
      }
    }
  }

  SplitResult sr = split(w.manifest, w.labels, is_target, nc, config.shots, config.seed);
  for (std::size_t i = 0; i < w.manifest.size(); ++i) w.manifest[i].split = sr.assignment[i];
  w.training = std::move(sr.training);

  // Descriptors and vocabulary.
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t g = 0; g < ng; ++g) {
      w.descriptors.set(w.classes[c].name, config.geographies[g].name,
                        synth_entry(synth_descriptor(g, c), probe_template_hash()));
    }
    w.descriptors.set_general(w.classes[c].name, synth_entry(synth_general_descriptor(c), general_template_hash()));
  }
  for (const char* word : kFillerWords) w.text.vocab.add(word);
  for (const auto& cls : w.classes) add_to_vocab(cls.name, w.text.vocab);
  for (const auto& geo : config.geographies) add_to_vocab(geo.name, w.text.vocab);
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t g = 0; g < ng; ++g) add_to_vocab(synth_descriptor(g, c), w.text.vocab);
    add_to_vocab(synth_general_descriptor(c), w.text.vocab);
  }

  // Knowledge fidelity at unit shift through the full prompt path.
  w.text.model = ToyTextEncoder::with_identity_projection(token_table(w, std::vector<double>(ng, 1.0)));
  for (std::size_t c = 0; c < nc; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    for (std::size_t g = 0; g < ng; ++g) {
      const EmbeddingVec k =
          class_knowledge(w.classes[c], config.geographies[g].name, PromptStrategy::CountryLLM, w.descriptors, w.text);
      const EmbeddingVec ref = w.class_dirs.row(ci).transpose() + w.shift_dirs[g].row(ci).transpose();
      const double cos = cosine_sim(k, ref);
      if (cos < kFidelityFloor) {
        throw Error(ErrorKind::SpecInvariantViolated, "knowledge fidelity " + io::format_double(cos) + " for " +
                                                          w.classes[c].name + "/" + config.geographies[g].name);
      }
    }
  }

  std::vector<double> scales;
  for (const auto& g : config.geographies) scales.push_back(g.delta);
  w.text.model = ToyTextEncoder::with_identity_projection(token_table(w, scales));
  return w;
}

SplitResult split(const std::vector<SampleMeta>& manifest, const std::vector<std::size_t>& labels,
                  const std::vector<bool>& is_target, std::size_t num_classes, std::size_t shots,
                  std::uint64_t seed) {
  if (manifest.size() != labels.size() || labels.size() != is_target.size()) {
    throw Error(ErrorKind::DimensionMismatch, "split: manifest, labels and target flags differ in length");
  }
  SplitResult out;
  out.assignment.assign(manifest.size(), Split::Target);
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!is_target[i]) by_class.at(labels[i]).push_back(i);
  }
  const Rng root = Rng(seed).derive(20);
  std::vector<std::size_t> train_rows;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& rows = by_class[c];
    const std::size_t n = rows.size();
    const auto n_train = static_cast<std::size_t>(std::lround(0.64 * double(n)));
    const auto n_val = static_cast<std::size_t>(std::lround(0.16 * double(n)));
    if (n_train < 1 || n_train + n_val >= n) {
      throw Error(ErrorKind::InsufficientSamples,
                  "class " + std::to_string(c) + " has " + std::to_string(n) + " source samples");
    }
    Rng rng = root.derive(c);
    shuffle(rows, rng);
    for (std::size_t k = 0; k < n; ++k) {
      out.assignment[rows[k]] = k < n_train ? Split::SourceTrain : k < n_train + n_val ? Split::SourceVal
                                                                                       : Split::SourceTest;
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (out.assignment[i] == Split::SourceTrain) train_rows.push_back(i);
  }
  std::vector<std::size_t> train_labels;
  for (const std::size_t i : train_rows) train_labels.push_back(labels[i]);
  for (const std::size_t k : sample_shots(train_labels, num_classes, shots, seed, &out.warnings)) {
    out.training.push_back(train_rows[k]);
  }
  return out;
}

void write_world(const SynthWorld& world, const std::filesystem::path& dir, const WorldFiles& names) {
  io::write_file(dir / names.classes, format_class_config(world.classes));
  save_manifest(dir / names.manifest, world.manifest);
  std::vector<std::pair<std::string, EmbeddingVec>> rows;
  rows.reserve(world.manifest.size());
  for (std::size_t i = 0; i < world.manifest.size(); ++i) {
    rows.emplace_back(world.manifest[i].id, world.features.row(static_cast<Eigen::Index>(i)).transpose());
  }
  save_embedding_tsv(dir / names.features, world.features.cols(), rows);
  save_descriptor_cache(dir / names.descriptors, world.descriptors);
  save_vocab(dir / names.vocab, world.text.vocab, world.text.model.token_table);
  io::write_file(dir / names.config, world.config.to_json().dump(2) + "\n");
}

}  // namespace geoprompt

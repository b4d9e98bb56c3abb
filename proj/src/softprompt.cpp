#include "geoprompt/softprompt.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "geoprompt/io_util.hpp"

namespace geoprompt {

std::string_view to_string(LrSchedule s) { return s == LrSchedule::Cosine ? "cosine" : "constant"; }

LrSchedule parse_schedule(std::string_view name) {
  if (name == "cosine") return LrSchedule::Cosine;
  if (name == "constant") return LrSchedule::Constant;
  throw Error(ErrorKind::InvalidConfig, "unknown lr schedule '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  const auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
  if (shots < 1) fail("shots must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (context_length < 1) fail("context_length (M) must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be >= 0");
  if (!(tau > 0.0)) fail("tau must be > 0");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (!(init_std >= 0.0)) fail("init_std must be >= 0");
}

double TrainConfig::lr_at(std::size_t epoch) const {
  if (schedule == LrSchedule::Constant) return learning_rate;
  return 0.5 * learning_rate * (1.0 + std::cos(std::numbers::pi * double(epoch) / double(epochs)));
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["shots"] = shots;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["context_length"] = context_length;
  j["lambda"] = lambda;
  j["tau"] = tau;
  j["learning_rate"] = learning_rate;
  j["momentum"] = momentum;
  j["schedule"] = std::string(to_string(schedule));
  j["init_std"] = init_std;
  j["seed"] = seed;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "train config must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "shots") c.shots = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "context_length") c.context_length = v.get<std::size_t>();
      else if (key == "lambda") c.lambda = v.get<double>();
      else if (key == "tau") c.tau = v.get<double>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "momentum") c.momentum = v.get<double>();
      else if (key == "schedule") c.schedule = parse_schedule(v.get<std::string>());
      else if (key == "init_std") c.init_std = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw Error(ErrorKind::InvalidConfig, "unknown train key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

KnowledgeTargets::KnowledgeTargets(Matrix rows) : rows_(std::move(rows)) {
  if (rows_.rows() == 0) throw Error(ErrorKind::EmptyList, "knowledge targets");
  for (Eigen::Index c = 0; c < rows_.rows(); ++c) {
    if (!rows_.row(c).allFinite() || !(rows_.row(c).norm() > kKnowledgeNormFloor)) {
      throw Error(ErrorKind::NearZeroNorm, "knowledge target row " + std::to_string(c));
    }
  }
}

KnowledgeTargets geo_knowledge_targets(const std::vector<ClassInfo>& classes, const GeographySet& geographies,
                                       PromptStrategy strategy, const DescriptorSet& dset, const TextEncoder& text) {
  Matrix rows(static_cast<Eigen::Index>(classes.size()), text.model.output_dim());
  KnowledgeCache cache;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    rows.row(static_cast<Eigen::Index>(c)) = cache.target(classes[c], geographies, strategy, dset, text).transpose();
  }
  return KnowledgeTargets(std::move(rows));
}

KnowledgeTargets kgcoop_targets(const std::vector<ClassInfo>& classes, const TextEncoder& text) {
  Matrix rows(static_cast<Eigen::Index>(classes.size()), text.model.output_dim());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const PromptSpec spec{PromptStrategy::Default, classes[c].name, std::nullopt, std::nullopt, classes[c].plural};
    rows.row(static_cast<Eigen::Index>(c)) = embed_prompt(spec, text).transpose();
  }
  return KnowledgeTargets(std::move(rows));
}

ClassTokens class_tokens(const ClassInfo& cls, const Vocab& vocab) {
  if (io::trim(cls.name).empty()) throw Error(ErrorKind::EmptyClassTokens, "blank class name");
  ClassTokens toks = tokenize(cls.name, vocab);
  if (toks.empty()) throw Error(ErrorKind::EmptyClassTokens, cls.name);
  return toks;
}

std::vector<ClassTokens> class_tokens(const std::vector<ClassInfo>& classes, const Vocab& vocab) {
  std::vector<ClassTokens> out;
  out.reserve(classes.size());
  for (const auto& c : classes) out.push_back(class_tokens(c, vocab));
  return out;
}

std::vector<TokenRow> build_class_prompt(const Matrix& context, const ClassTokens& cls) {
  if (cls.empty()) throw Error(ErrorKind::EmptyClassTokens, "class has no tokens");
  std::vector<TokenRow> rows;
  rows.reserve(static_cast<std::size_t>(context.rows()) + cls.size());
  for (Eigen::Index m = 0; m < context.rows(); ++m) rows.emplace_back(SoftToken{context.row(m).transpose()});
  for (const auto& t : cls) rows.emplace_back(t);
  return rows;
}

Matrix class_embeddings(const Matrix& context, const std::vector<ClassTokens>& classes, const ToyTextEncoder& enc) {
  Matrix out(static_cast<Eigen::Index>(classes.size()), enc.output_dim());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    out.row(static_cast<Eigen::Index>(c)) = encode_text(enc, build_class_prompt(context, classes[c])).transpose();
  }
  return out;
}

namespace {

// Cosines of every class row against a feature, plus d cos / d row.
struct CosineTerms {
  Eigen::VectorXd cos;
};

double row_cosine(const Matrix& w, Eigen::Index c, const EmbeddingVec& unit_other) {
  const double n = w.row(c).norm();
  if (!(n > kNormEpsilon)) throw Error(ErrorKind::NearZeroNorm, "class embedding row " + std::to_string(c));
  return w.row(c).dot(unit_other) / n;
}

// d cos(w, o) / d w for unit o, without clamping.
Eigen::RowVectorXd cosine_grad(const Matrix& w, Eigen::Index c, const EmbeddingVec& unit_other, double cos) {
  const double n = w.row(c).norm();
  return unit_other.transpose() / n - cos * w.row(c) / (n * n);
}

double log_sum_exp(const Eigen::VectorXd& s) {
  const double mx = s.maxCoeff();
  return mx + std::log((s.array() - mx).exp().sum());
}

EmbeddingVec unit(const EmbeddingVec& v) { return l2_normalize(v); }

}  // namespace

double ce_loss(const Matrix& class_emb, const EmbeddingVec& feature, std::size_t label, double tau) {
  if (feature.size() != class_emb.cols()) throw Error(ErrorKind::DimensionMismatch, "ce_loss: feature width");
  if (label >= static_cast<std::size_t>(class_emb.rows())) throw Error(ErrorKind::DimensionMismatch, "ce_loss: label");
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidConfig, "tau must be > 0");
  const EmbeddingVec f = unit(feature);
  Eigen::VectorXd s(class_emb.rows());
  for (Eigen::Index j = 0; j < class_emb.rows(); ++j) s[j] = row_cosine(class_emb, j, f) / tau;
  return log_sum_exp(s) - s[static_cast<Eigen::Index>(label)];
}

double gkr_loss(const Matrix& class_emb, const KnowledgeTargets& targets) {
  if (targets.num_classes() != static_cast<std::size_t>(class_emb.rows())) {
    throw Error(ErrorKind::MissingTarget, "targets cover " + std::to_string(targets.num_classes()) + " of " +
                                              std::to_string(class_emb.rows()) + " classes");
  }
  double sum = 0.0;
  for (Eigen::Index c = 0; c < class_emb.rows(); ++c) sum += cosine_sim(class_emb.row(c), targets.rows().row(c));
  return 1.0 - sum / double(class_emb.rows());
}

template <GkrTerm Term>
LossRecord loss_and_gradient(const Matrix& context, const TrainProblem& problem, const LabeledFeatures& data,
                             std::span<const std::size_t> batch, double lambda, double tau, Matrix* grad) {
  if (batch.empty()) throw Error(ErrorKind::EmptyList, "empty batch");
  if (!problem.encoder) throw Error(ErrorKind::InvalidConfig, "train problem has no encoder");
  if constexpr (Term == GkrTerm::Enabled) {
    if (!problem.targets) throw Error(ErrorKind::MissingTarget, "gkr term enabled without knowledge targets");
  }
  const auto& enc = *problem.encoder;
  const auto num_classes = static_cast<Eigen::Index>(problem.classes.size());
  const Matrix w = class_embeddings(context, problem.classes, enc);

  // dL/dw, accumulated over the batch then pushed through the encoder.
  Matrix dw = Matrix::Zero(num_classes, w.cols());
  LossRecord rec;
  const double inv_batch = 1.0 / double(batch.size());
  Eigen::VectorXd cos(num_classes);
  Eigen::VectorXd s(num_classes);
  for (const std::size_t i : batch) {
    const EmbeddingVec f = unit(data.features.row(static_cast<Eigen::Index>(i)).transpose());
    const auto y = static_cast<Eigen::Index>(data.labels[i]);
    if (y >= num_classes) throw Error(ErrorKind::DimensionMismatch, "label out of range");
    for (Eigen::Index j = 0; j < num_classes; ++j) {
      cos[j] = row_cosine(w, j, f);
      s[j] = cos[j] / tau;
    }
    const double lse = log_sum_exp(s);
    rec.ce += (lse - s[y]) * inv_batch;
    if (grad) {
      for (Eigen::Index j = 0; j < num_classes; ++j) {
        const double p = std::exp(s[j] - lse);
        const double dlds = p - (j == y ? 1.0 : 0.0);
        dw.row(j) += (inv_batch * dlds / tau) * cosine_grad(w, j, f, cos[j]);
      }
    }
  }
  rec.total = rec.ce;

  if constexpr (Term == GkrTerm::Enabled) {
    const auto& k = problem.targets->rows();
    if (k.rows() != num_classes) throw Error(ErrorKind::MissingTarget, "knowledge targets do not cover all classes");
    double sum = 0.0;
    Matrix dgkr = Matrix::Zero(num_classes, w.cols());
    for (Eigen::Index c = 0; c < num_classes; ++c) {
      const EmbeddingVec kc = unit(k.row(c).transpose());
      const double cc = row_cosine(w, c, kc);
      sum += cc;
      dgkr.row(c) = -cosine_grad(w, c, kc, cc) / double(num_classes);
    }
    const double gkr = 1.0 - sum / double(num_classes);
    rec.gkr = gkr;
    rec.total = total_loss(rec.ce, gkr, lambda);
    if (grad) dw += lambda * dgkr;
  }

  if (grad) {
    *grad = Matrix::Zero(context.rows(), context.cols());
    for (Eigen::Index c = 0; c < num_classes; ++c) {
      const auto rows = build_class_prompt(context, problem.classes[static_cast<std::size_t>(c)]);
      const auto per_token = encode_text_vjp(enc, rows, dw.row(c).transpose());
      for (Eigen::Index m = 0; m < context.rows(); ++m) grad->row(m) += per_token[static_cast<std::size_t>(m)].transpose();
    }
  }
  return rec;
}

template LossRecord loss_and_gradient<GkrTerm::Enabled>(const Matrix&, const TrainProblem&, const LabeledFeatures&,
                                                        std::span<const std::size_t>, double, double, Matrix*);
template LossRecord loss_and_gradient<GkrTerm::Disabled>(const Matrix&, const TrainProblem&, const LabeledFeatures&,
                                                         std::span<const std::size_t>, double, double, Matrix*);

SoftPromptState SoftPromptState::init(const TrainConfig& config, Eigen::Index input_dim) {
  config.validate();
  SoftPromptState s;
  Rng root(config.seed);
  Rng init_rng = root.derive(1);
  s.context = gaussian_matrix(static_cast<Eigen::Index>(config.context_length), input_dim, config.init_std, init_rng);
  s.velocity = Matrix::Zero(s.context.rows(), s.context.cols());
  s.lambda = config.lambda;
  s.tau = config.tau;
  s.rng = root.derive(3);
  return s;
}

template <GkrTerm Term>
LossRecord grad_step(SoftPromptState& state, const TrainProblem& problem, const LabeledFeatures& data,
                     std::span<const std::size_t> batch, double learning_rate, double momentum) {
  const auto fail = [&](const LossRecord& rec) {
    return Error(ErrorKind::NonFiniteLoss, "step " + std::to_string(state.step) + " epoch " +
                                               std::to_string(state.epoch) + ": ce=" + io::format_double(rec.ce) +
                                               " total=" + io::format_double(rec.total) +
                                               " |context|=" + io::format_double(state.context.norm()));
  };
  // A diverged context would otherwise surface as a normalization error.
  if (!state.context.allFinite()) throw fail(LossRecord{NAN, std::nullopt, NAN});
  Matrix grad;
  const LossRecord rec = loss_and_gradient<Term>(state.context, problem, data, batch, state.lambda, state.tau, &grad);
  if (!std::isfinite(rec.total) || !grad.allFinite()) throw fail(rec);
  state.velocity = momentum * state.velocity + grad;
  state.context -= learning_rate * state.velocity;
  ++state.step;
  return rec;
}

template LossRecord grad_step<GkrTerm::Enabled>(SoftPromptState&, const TrainProblem&, const LabeledFeatures&,
                                                std::span<const std::size_t>, double, double);
template LossRecord grad_step<GkrTerm::Disabled>(SoftPromptState&, const TrainProblem&, const LabeledFeatures&,
                                                 std::span<const std::size_t>, double, double);

std::vector<std::size_t> sample_shots(const std::vector<std::size_t>& labels, std::size_t num_classes,
                                      std::size_t shots, std::uint64_t seed, std::vector<std::string>* warnings,
                                      const std::vector<std::string>& class_names) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw Error(ErrorKind::DimensionMismatch, "label out of range");
    by_class[labels[i]].push_back(i);
  }
  const Rng root = Rng(seed).derive(2);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& pool = by_class[c];
    const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
    if (pool.empty()) throw Error(ErrorKind::EmptyClass, "class '" + name + "' has no training samples");
    if (pool.size() < shots) {
      if (warnings) {
        warnings->push_back("class '" + name + "' has " + std::to_string(pool.size()) + " samples < " +
                            std::to_string(shots) + " shots; using all");
      }
      chosen.insert(chosen.end(), pool.begin(), pool.end());
      continue;
    }
    Rng rng = root.derive(c);
    // Partial Fisher-Yates: the first `shots` slots become the sample.
    for (std::size_t i = 0; i < shots; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    std::vector<std::size_t> pick(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(shots));
    std::sort(pick.begin(), pick.end());
    chosen.insert(chosen.end(), pick.begin(), pick.end());
  }
  return chosen;
}

template <GkrTerm Term>
TrainResult train(const TrainConfig& config, const LabeledFeatures& source, const TrainProblem& problem,
                  const std::vector<std::string>& class_names) {
  config.validate();
  if (!problem.encoder) throw Error(ErrorKind::InvalidConfig, "train problem has no encoder");
  if (source.features.rows() != static_cast<Eigen::Index>(source.labels.size())) {
    throw Error(ErrorKind::DimensionMismatch, "features vs labels");
  }
  TrainResult result;
  result.shot_indices =
      sample_shots(source.labels, problem.classes.size(), config.shots, config.seed, &result.warnings, class_names);
  result.state = SoftPromptState::init(config, problem.encoder->input_dim());
  auto& state = result.state;

  std::vector<std::size_t> order = result.shot_indices;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    state.epoch = epoch;
    const double lr = config.lr_at(epoch);
    shuffle(order, state.rng);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    double gkr_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      const LossRecord step = grad_step<Term>(state, problem, source, batch, lr, config.momentum);
      const double weight = double(len) / double(order.size());
      rec.ce += weight * step.ce;
      rec.total += weight * step.total;
      if (step.gkr) gkr_sum += weight * *step.gkr;
    }
    if constexpr (Term == GkrTerm::Enabled) rec.gkr = gkr_sum;
    result.history.push_back(rec);
  }
  state.epoch = config.epochs;
  return result;
}

template TrainResult train<GkrTerm::Enabled>(const TrainConfig&, const LabeledFeatures&, const TrainProblem&,
                                             const std::vector<std::string>&);
template TrainResult train<GkrTerm::Disabled>(const TrainConfig&, const LabeledFeatures&, const TrainProblem&,
                                              const std::vector<std::string>&);

TrainResult train_auto(const TrainConfig& config, const LabeledFeatures& source, const TrainProblem& problem,
                       const std::vector<std::string>& class_names) {
  if (problem.targets) return train<GkrTerm::Enabled>(config, source, problem, class_names);
  return train<GkrTerm::Disabled>(config, source, problem, class_names);
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json matrix_json(const Matrix& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw Error(ErrorKind::ParseError, "matrix must be a nonempty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols) {
      throw Error(ErrorKind::ParseError, "ragged matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

}  // namespace

nlohmann::ordered_json checkpoint_json(const TrainConfig& config, const std::vector<std::string>& class_names,
                                       const TrainResult& result) {
  nlohmann::ordered_json j;
  j["config"] = config.to_json();
  j["classes"] = class_names;
  j["context"] = matrix_json(result.state.context);
  j["velocity"] = matrix_json(result.state.velocity);
  j["epoch"] = result.state.epoch;
  j["step"] = result.state.step;
  j["rng_state"] = result.state.rng.state();
  nlohmann::ordered_json hist = nlohmann::ordered_json::array();
  for (const auto& h : result.history) {
    nlohmann::ordered_json e;
    e["epoch"] = h.epoch;
    e["ce"] = h.ce;
    e["gkr"] = h.gkr ? nlohmann::ordered_json(*h.gkr) : nlohmann::ordered_json(nullptr);
    e["total"] = h.total;
    e["lr"] = h.lr;
    hist.push_back(std::move(e));
  }
  j["history"] = std::move(hist);
  return j;
}

std::string format_training_log(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,ce,gkr,total,lr\n";
  for (const auto& h : history) {
    out += std::to_string(h.epoch) + "," + io::format_double(h.ce) + "," + (h.gkr ? io::format_double(*h.gkr) : "") +
           "," + io::format_double(h.total) + "," + io::format_double(h.lr) + "\n";
  }
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  LoadedCheckpoint out;
  try {
    const auto j = nlohmann::json::parse(io::read_file(path));
    out.config = TrainConfig::from_json(j.at("config"));
    out.class_names = j.at("classes").get<std::vector<std::string>>();
    out.state.context = matrix_from_json(j.at("context"));
    out.state.velocity = matrix_from_json(j.at("velocity"));
    out.state.epoch = j.at("epoch").get<std::size_t>();
    out.state.step = j.at("step").get<std::size_t>();
    out.state.rng = Rng::from_state(j.at("rng_state").get<Rng::State>());
    out.state.lambda = out.config.lambda;
    out.state.tau = out.config.tau;
    for (const auto& e : j.at("history")) {
      EpochRecord r;
      r.epoch = e.at("epoch").get<std::size_t>();
      r.ce = e.at("ce").get<double>();
      if (!e.at("gkr").is_null()) r.gkr = e.at("gkr").get<double>();
      r.total = e.at("total").get<double>();
      r.lr = e.at("lr").get<double>();
      out.history.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  if (static_cast<std::size_t>(out.state.context.rows()) != out.config.context_length) {
    throw Error(ErrorKind::ParseError, path.string() + ": context rows do not match context_length");
  }
  return out;
}

}  // namespace geoprompt

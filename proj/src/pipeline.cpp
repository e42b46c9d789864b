#include "semuq/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <thread>

#include "semuq/log.hpp"

namespace semuq {

namespace {

std::vector<double> to_std(const Eigen::Ref<const Eigen::VectorXd>& v)
{
  return std::vector<double>(v.data(), v.data() + v.size());
}

template <typename Fn>
auto run_stage(const char* stage, const std::string& question_id, Fn&& fn) -> decltype(fn())
{
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, question_id, e.what());
  }
}

} // namespace

QtnModel build_qtn_model(const Eigen::Ref<const Eigen::VectorXd>& seq_probs,
                         const OperatorBasis& basis,
                         const RunConfig& config)
{
  if (basis.spins() != config.spins)
    throw ParameterError("operator basis spin count does not match the run config");
  const AmplitudeGrid grid = AmplitudeGrid::make(config.spins);
  const auto weighting = config.weighted_kme ? KmeWeighting::probability : KmeWeighting::parzen;

  QtnModel m;
  m.kme = l2_normalize(empirical_kme(seq_probs, grid, config.sigma, weighting));
  const Eigen::VectorXcd psi = m.kme.values.cast<cplx>();
  m.qcm = quantum_correlation_matrix(basis, psi);
  m.fit = null_space_weights(m.qcm, config.null_tolerance);
  m.spectrum = eigendecompose(assemble_hamiltonian(basis, m.fit.weights), psi, config.degeneracy_guard);
  const Eigen::VectorXd delta_w = make_perturbation(m.fit.weights, config.epsilon, config.direction, config.seed);
  m.corrections = first_order_corrections(m.spectrum, basis, delta_w, config.degeneracy_guard);
  m.features = uncertainty_features(m.corrections.modes1, config.sigma, grid);
  m.features.energies1 = m.corrections.energies1;
  m.features.perturbation = delta_w;
  return m;
}

Eigen::VectorXd query_uq_scores(const QtnModel& model, const Eigen::Ref<const Eigen::VectorXd>& seq_probs, int m_adj)
{
  Eigen::VectorXd out(seq_probs.size());
  for (Eigen::Index r = 0; r < seq_probs.size(); ++r)
    out[r] = uq_score(model.features, model.spectrum, seq_probs[r], m_adj);
  return out;
}

void to_json(nlohmann::json& j, const BundleScorecard& s)
{
  auto opt = [](const std::optional<bool>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{ { "question_id", s.question_id },
                      { "n_clusters", s.n_clusters },
                      { "cluster_sizes", s.cluster_sizes },
                      { "cluster_labels", s.cluster_labels },
                      { "uq_scores", s.uq_scores },
                      { "adjusted_seq_probs", s.adjusted_seq_probs },
                      { "adjusted_cluster_probs", s.adjusted_cluster_probs },
                      { "entropy", s.entropy },
                      { "qtn",
                        { { "null_residual", s.qtn.null_residual },
                          { "approximate_fit", s.qtn.approximate_fit },
                          { "kme_overlap", s.qtn.kme_overlap },
                          { "kme_mode_index", s.qtn.kme_mode_index },
                          { "imaginary_mass", s.qtn.imaginary_mass },
                          { "dropped_terms", s.qtn.dropped_terms } } },
                      { "label", opt(s.label) },
                      { "label_calibrated", opt(s.label_calibrated) },
                      { "nonconverged", s.nonconverged },
                      { "metadata", s.metadata } };
}

void from_json(const nlohmann::json& j, BundleScorecard& s)
{
  auto opt = [&](const char* key) -> std::optional<bool> {
    if (!j.contains(key) || j.at(key).is_null())
      return std::nullopt;
    return j.at(key).get<bool>();
  };
  j.at("question_id").get_to(s.question_id);
  j.at("n_clusters").get_to(s.n_clusters);
  j.at("cluster_sizes").get_to(s.cluster_sizes);
  s.cluster_labels = j.value("cluster_labels", std::vector<std::size_t>{});
  j.at("uq_scores").get_to(s.uq_scores);
  s.adjusted_seq_probs = j.value("adjusted_seq_probs", std::vector<double>{});
  s.adjusted_cluster_probs = j.value("adjusted_cluster_probs", std::vector<double>{});
  j.at("entropy").get_to(s.entropy);
  if (j.contains("qtn")) {
    const auto& q = j.at("qtn");
    s.qtn.null_residual = q.value("null_residual", 0.0);
    s.qtn.approximate_fit = q.value("approximate_fit", false);
    s.qtn.kme_overlap = q.value("kme_overlap", 0.0);
    s.qtn.kme_mode_index = q.value("kme_mode_index", Eigen::Index{ 0 });
    s.qtn.imaginary_mass = q.value("imaginary_mass", 0.0);
    s.qtn.dropped_terms = q.value("dropped_terms", Eigen::Index{ 0 });
  }
  s.label = opt("label");
  s.label_calibrated = opt("label_calibrated");
  s.nonconverged = j.value("nonconverged", 0);
  s.metadata = j.value("metadata", std::map<std::string, std::string>{});
}

double method_score(const BundleScorecard& card, const std::string& method)
{
  const auto& e = card.entropy;
  if (method == "NE")
    return e.naive_entropy;
  if (method == "SE_S")
    return e.shannon_semantic;
  if (method == "DSE_S")
    return e.discrete_semantic;
  if (method == "SE_R")
    return e.renyi_semantic;
  if (method == "SE_R+")
    return e.renyi_semantic_calibrated;
  throw ParameterError("unknown method '" + method + "' (expected NE, SE_S, DSE_S, SE_R or SE_R+)");
}

std::optional<bool> method_label(const BundleScorecard& card, const std::string& method)
{
  method_score(card, method);
  return method == "SE_R+" ? card.label_calibrated : card.label;
}

std::string scenario_key(const std::map<std::string, std::string>& metadata)
{
  std::string key;
  for (const char* field : { "dataset", "model", "quantization", "prompt_style" }) {
    auto it = metadata.find(field);
    if (!key.empty())
      key += '/';
    key += it == metadata.end() ? "default" : it->second;
  }
  return key;
}

EvaluationSummary evaluate_scorecards(const std::vector<BundleScorecard>& cards,
                                      const std::vector<std::string>& methods,
                                      const std::vector<double>& fractions)
{
  if (methods.empty())
    throw ParameterError("no methods selected for evaluation");
  EvaluationSummary out;

  auto evaluate_subset = [&](const std::vector<const BundleScorecard*>& subset, const std::string& method) {
    Eigen::VectorXd scores(static_cast<Eigen::Index>(subset.size()));
    std::vector<std::optional<bool>> labels;
    for (std::size_t i = 0; i < subset.size(); ++i) {
      scores[static_cast<Eigen::Index>(i)] = method_score(*subset[i], method);
      labels.push_back(method_label(*subset[i], method));
    }
    return evaluate_method(method, scores, labels, fractions);
  };

  std::vector<const BundleScorecard*> all;
  std::map<std::string, std::vector<const BundleScorecard*>> scenarios;
  for (const auto& c : cards) {
    all.push_back(&c);
    scenarios[scenario_key(c.metadata)].push_back(&c);
  }
  for (const auto& method : methods)
    out.reports.push_back(evaluate_subset(all, method));

  if (methods.size() < 2)
    return out;

  std::map<std::string, std::map<std::string, double>> auroc_by_scenario;
  std::map<std::string, std::map<std::string, double>> aurac_by_scenario;
  for (const auto& [key, subset] : scenarios) {
    try {
      for (const auto& method : methods) {
        const EvaluationReport r = evaluate_subset(subset, method);
        auroc_by_scenario[key][method] = r.auroc;
        aurac_by_scenario[key][method] = r.aurac;
      }
    } catch (const UndefinedMetricError& e) {
      log_warning("scenario '" + key + "' left out of the win rates: " + e.what());
      auroc_by_scenario.erase(key);
      aurac_by_scenario.erase(key);
      ++out.n_scenarios_skipped;
    }
  }
  if (!auroc_by_scenario.empty()) {
    out.auroc_win_rates = win_rate_matrix(auroc_by_scenario, methods);
    out.aurac_win_rates = win_rate_matrix(aurac_by_scenario, methods);
  }
  return out;
}

void to_json(nlohmann::json& j, const EvaluationSummary& s)
{
  j = nlohmann::json{ { "reports", s.reports }, { "n_scenarios_skipped", s.n_scenarios_skipped } };
  if (s.auroc_win_rates)
    j["win_rates"] = { { "auroc", *s.auroc_win_rates }, { "aurac", *s.aurac_win_rates } };
}

Pipeline::Pipeline(RunConfig config)
  : config_(std::move(config))
{
  config_.validate();
  switch (config_.backend.kind) {
    case BackendKind::exact_match:
      backend_ = std::make_shared<ExactMatchBackend>();
      break;
    case BackendKind::external_service:
      backend_ = std::make_shared<ServiceBackend>(config_.backend);
      break;
    case BackendKind::precomputed:
    case BackendKind::record_cluster_ids:
      break;
  }
}

void Pipeline::set_precomputed_verdicts(std::map<std::string, VerdictMatrix> verdicts)
{
  precomputed_ = std::move(verdicts);
}

void Pipeline::set_backend(std::shared_ptr<const EntailmentBackend> backend)
{
  backend_ = std::move(backend);
}

void Pipeline::set_diagnostics_dir(std::filesystem::path dir)
{
  std::filesystem::create_directories(dir);
  diagnostics_dir_ = std::move(dir);
}

const OperatorBasis& Pipeline::basis() const
{
  std::lock_guard lock(basis_mutex_);
  if (!basis_)
    basis_ = std::make_shared<const OperatorBasis>(OperatorBasis::build(config_.spins, config_.locality));
  return *basis_;
}

SemanticClustering Pipeline::cluster(const QuestionBundle& bundle) const
{
  if (backend_)
    return assign_clusters(bundle, *backend_);
  if (config_.backend.kind == BackendKind::record_cluster_ids)
    return clustering_from_record_ids(bundle);
  auto it = precomputed_.find(bundle.question_id);
  if (it == precomputed_.end())
    throw ValidationError("no precomputed entailment matrix for question '" + bundle.question_id + "'");
  return assign_clusters(bundle, PrecomputedBackend(it->second));
}

BundleScorecard Pipeline::score_bundle(const QuestionBundle& bundle) const
{
  const SemanticClustering clustering = run_stage("clustering", bundle.question_id, [&] { return cluster(bundle); });
  return score_bundle(bundle, clustering);
}

Pipeline::Prepared Pipeline::prepare_with_model(const QuestionBundle& input,
                                                const SemanticClustering& clustering) const
{
  const std::string& id = input.question_id;
  Prepared p;
  p.prepared.bundle = input;
  p.prepared.clustering = clustering;
  run_stage("normalization", id, [&] {
    validate_and_normalize(p.prepared.bundle, "bundle '" + id + "'");
    clustering.check_partition();
    if (clustering.generation_count != p.prepared.bundle.size())
      throw ValidationError("clustering covers " + std::to_string(clustering.generation_count) +
                            " generations, bundle has " + std::to_string(p.prepared.bundle.size()));
    return 0;
  });
  const Eigen::VectorXd seq = p.prepared.bundle.normalized_probabilities();
  const OperatorBasis& ops = basis();
  p.model = run_stage("qtn", id, [&] { return build_qtn_model(seq, ops, config_); });
  p.prepared.uq_scores = run_stage("uq_score", id, [&] { return query_uq_scores(p.model, seq, config_.m_adj); });
  return p;
}

PreparedBundle Pipeline::prepare(const QuestionBundle& bundle) const
{
  const SemanticClustering clustering = run_stage("clustering", bundle.question_id, [&] { return cluster(bundle); });
  return prepare_with_model(bundle, clustering).prepared;
}

BundleScorecard Pipeline::score_bundle(const QuestionBundle& input, const SemanticClustering& clustering) const
{
  const std::string& id = input.question_id;
  const Prepared p = prepare_with_model(input, clustering);
  const QuestionBundle& bundle = p.prepared.bundle;
  const QtnModel& model = p.model;
  const CalibratedBundle cal = run_stage("calibration", id, [&] {
    return calibrate_bundle(bundle, clustering, p.prepared.uq_scores, config_.calibration, config_.log_base);
  });
  if (diagnostics_dir_)
    dump_diagnostics(id, model);

  BundleScorecard s;
  s.question_id = id;
  s.n_clusters = clustering.size();
  s.cluster_sizes = clustering.sizes();
  s.cluster_labels = clustering.labels();
  s.uq_scores = to_std(p.prepared.uq_scores);
  s.adjusted_seq_probs = to_std(cal.adjusted_seq_probs);
  s.adjusted_cluster_probs = to_std(cal.adjusted_cluster_probs);
  s.entropy = cal.report;
  s.qtn.null_residual = model.fit.residual;
  s.qtn.approximate_fit = model.fit.approximate;
  s.qtn.kme_overlap = model.spectrum.kme_overlap;
  s.qtn.kme_mode_index = model.spectrum.kme_mode_index;
  s.qtn.imaginary_mass = model.qcm.imaginary_mass;
  s.qtn.dropped_terms = model.corrections.dropped_terms;
  s.label = question_label(bundle, bundle.normalized_probabilities());
  s.label_calibrated = question_label(bundle, cal.adjusted_seq_probs);
  s.nonconverged = cal.nonconverged;
  s.metadata = bundle.metadata;
  return s;
}

std::vector<std::string> Pipeline::for_each_parallel(std::size_t count,
                                                     const std::function<void(std::size_t)>& fn) const
{
  std::vector<std::string> errors(count);
  std::atomic<std::size_t> next{ 0 };
  basis();

  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };

  std::size_t workers = config_.workers > 0 ? static_cast<std::size_t>(config_.workers)
                                            : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(count, 1));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back(worker);
  }
  return errors;
}

std::vector<BundleScorecard> Pipeline::score_all(const std::vector<QuestionBundle>& bundles,
                                                 std::size_t* failed,
                                                 std::vector<std::string>* failures) const
{
  std::vector<std::optional<BundleScorecard>> slots(bundles.size());
  const auto errors = for_each_parallel(bundles.size(), [&](std::size_t i) { slots[i] = score_bundle(bundles[i]); });

  std::vector<BundleScorecard> out;
  std::size_t n_failed = 0;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    if (slots[i]) {
      out.push_back(std::move(*slots[i]));
      continue;
    }
    ++n_failed;
    log_warning("skipping " + errors[i]);
    if (failures)
      failures->push_back(errors[i]);
  }
  if (failed)
    *failed = n_failed;
  return out;
}

LambdaSweep Pipeline::sweep_lambda(const std::vector<QuestionBundle>& bundles, const std::vector<double>& lambdas) const
{
  std::vector<std::optional<PreparedBundle>> slots(bundles.size());
  const auto errors = for_each_parallel(bundles.size(), [&](std::size_t i) { slots[i] = prepare(bundles[i]); });

  std::vector<QuestionBundle> kept;
  std::vector<SemanticClustering> clusterings;
  std::vector<Eigen::VectorXd> uq;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    if (!slots[i]) {
      log_warning("skipping " + errors[i]);
      continue;
    }
    kept.push_back(std::move(slots[i]->bundle));
    clusterings.push_back(std::move(slots[i]->clustering));
    uq.push_back(std::move(slots[i]->uq_scores));
  }
  return semuq::sweep_lambda(kept, clusterings, uq, lambdas, config_.calibration, config_.log_base);
}

ExperimentResult Pipeline::run_experiment(const std::vector<QuestionBundle>& bundles,
                                          const std::vector<std::string>& methods) const
{
  for (const auto& m : methods)
    if (std::find(kAllMethods.begin(), kAllMethods.end(), m) == kAllMethods.end())
      throw ParameterError("unknown method '" + m + "'");

  ExperimentResult out;
  out.scorecards = score_all(bundles, &out.failed, &out.failures);
  out.run.config = config_;
  std::set<std::string> scored;
  for (const auto& card : out.scorecards) {
    scored.insert(card.question_id);
    for (const auto& m : methods)
      out.run.method_scores[m][card.question_id] = method_score(card, m);
  }
  for (const auto& b : bundles)
    if (scored.count(b.question_id))
      out.run.bundles.push_back(b);
  out.evaluation = evaluate_scorecards(out.scorecards, methods);
  return out;
}

void Pipeline::dump_diagnostics(const std::string& question_id, const QtnModel& model) const
{
  std::string stem = question_id;
  std::replace_if(stem.begin(), stem.end(), [](char c) { return c == '/' || c == '\\' || c == ' '; }, '_');
  const auto base = *diagnostics_dir_ / stem;

  std::ofstream qcm(base.string() + "_qcm.csv");
  qcm.precision(17);
  qcm << "index,eigenvalue\n";
  for (Eigen::Index k = 0; k < model.fit.qcm_eigenvalues.size(); ++k)
    qcm << k << ',' << model.fit.qcm_eigenvalues[k] << '\n';
  qcm << "null_residual," << model.fit.residual << '\n';

  std::ofstream spectrum_csv(base.string() + "_spectrum.csv");
  spectrum_csv.precision(17);
  spectrum_csv << "mode,energy,energy_correction,kme_mode\n";
  for (Eigen::Index m = 0; m < model.spectrum.energies.size(); ++m)
    spectrum_csv << m << ',' << model.spectrum.energies[m] << ',' << model.corrections.energies1[m] << ','
         << (m == model.spectrum.kme_mode_index ? 1 : 0) << '\n';

  std::ofstream feat(base.string() + "_features.csv");
  feat.precision(17);
  const auto& f = model.features.features;
  for (Eigen::Index m = 0; m < f.rows(); ++m) {
    for (Eigen::Index x = 0; x < f.cols(); ++x)
      feat << (x ? "," : "") << f(m, x);
    feat << '\n';
  }

  std::ofstream kme(base.string() + "_kme.csv");
  write_csv(kme, model.kme);
}

} // namespace semuq

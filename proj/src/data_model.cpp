#include "semuq/data_model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "semuq/error.hpp"

namespace semuq {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Tolerance for consistency between raw_seq_prob and exp(sum of token log-probs).
constexpr double kRawConsistencyTol = 1e-9;
constexpr double kNormSumTol = 1e-9;

} // namespace

double sequence_log_probability(std::span<const double> token_log_probs)
{
  double total = 0.0;
  for (std::size_t i = 0; i < token_log_probs.size(); ++i) {
    const double lp = token_log_probs[i];
    if (!std::isfinite(lp))
      throw ValidationError("token_log_probs[" + std::to_string(i) + "] is not finite");
    if (lp > 0.0)
      throw ValidationError("token_log_probs[" + std::to_string(i) + "] is positive");
    total += lp;
  }
  return total;
}

Eigen::VectorXd normalize_sequence_probabilities(const Eigen::Ref<const Eigen::VectorXd>& raw)
{
  if (raw.size() == 0)
    throw ValidationError("cannot normalize an empty probability list");
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (!(raw[i] > 0.0) || !std::isfinite(raw[i]))
      throw ValidationError("raw probability [" + std::to_string(i) + "] must be positive and finite");
  }
  return raw / raw.sum();
}

Eigen::VectorXd normalize_log_probabilities(const Eigen::Ref<const Eigen::VectorXd>& log_probs)
{
  if (log_probs.size() == 0)
    throw ValidationError("cannot normalize an empty probability list");
  if (!log_probs.allFinite())
    throw ValidationError("log-probabilities must be finite");
  const double shift = log_probs.maxCoeff();
  Eigen::VectorXd w = (log_probs.array() - shift).exp().matrix();
  return w / w.sum();
}

Eigen::VectorXd QuestionBundle::normalized_probabilities() const
{
  Eigen::VectorXd p(static_cast<Eigen::Index>(generations.size()));
  for (std::size_t r = 0; r < generations.size(); ++r)
    p[static_cast<Eigen::Index>(r)] = generations[r].norm_seq_prob;
  return p;
}

void validate_and_normalize(QuestionBundle& bundle, const std::string& where)
{
  const std::string prefix = where.empty() ? "bundle '" + bundle.question_id + "'"
                                           : where + " (bundle '" + bundle.question_id + "')";
  if (bundle.question_id.empty())
    throw ValidationError(prefix + ": field question_id is empty");
  if (bundle.generations.empty())
    throw ValidationError(prefix + ": field generations is empty");

  const auto R = static_cast<Eigen::Index>(bundle.generations.size());
  Eigen::VectorXd log_raw(R);
  bool have_all_norm = true;
  bool any_norm = false;

  for (Eigen::Index r = 0; r < R; ++r) {
    auto& g = bundle.generations[static_cast<std::size_t>(r)];
    const std::string field = prefix + ": generations[" + std::to_string(r) + "]";
    const bool raw_given = std::isfinite(g.raw_seq_prob);

    if (g.token_log_probs) {
      double lp = 0.0;
      try {
        lp = sequence_log_probability(*g.token_log_probs);
      } catch (const ValidationError& e) {
        throw ValidationError(field + "." + e.what());
      }
      const double derived = std::exp(lp);
      if (raw_given) {
        if (!(g.raw_seq_prob > 0.0))
          throw ValidationError(field + ".raw_seq_prob must be positive");
        if (std::abs(derived - g.raw_seq_prob) > kRawConsistencyTol * g.raw_seq_prob)
          throw ValidationError(field + ".raw_seq_prob disagrees with exp(sum of token_log_probs)");
      } else {
        g.raw_seq_prob = derived;
      }
      log_raw[r] = lp;
    } else if (raw_given) {
      if (!(g.raw_seq_prob > 0.0))
        throw ValidationError(field + ".raw_seq_prob must be positive");
      log_raw[r] = std::log(g.raw_seq_prob);
    } else {
      log_raw[r] = kNaN;
    }

    if (std::isfinite(g.norm_seq_prob)) {
      any_norm = true;
      if (!(g.norm_seq_prob > 0.0 && g.norm_seq_prob <= 1.0))
        throw ValidationError(field + ".norm_seq_prob must lie in (0, 1]");
    } else {
      have_all_norm = false;
    }
  }

  if (have_all_norm) {
    const double total = bundle.normalized_probabilities().sum();
    if (std::abs(total - 1.0) > kNormSumTol)
      throw ValidationError(prefix + ": field norm_seq_prob does not sum to 1 (sum = " +
                            std::to_string(total) + ")");
    return;
  }
  if (any_norm)
    throw ValidationError(prefix + ": field norm_seq_prob is present on some generations only");
  if (!log_raw.allFinite())
    throw ValidationError(prefix + ": a generation carries neither raw_seq_prob nor token_log_probs");

  const Eigen::VectorXd norm = normalize_log_probabilities(log_raw);
  for (Eigen::Index r = 0; r < R; ++r)
    bundle.generations[static_cast<std::size_t>(r)].norm_seq_prob = norm[r];
}

void to_json(nlohmann::json& j, const GenerationRecord& g)
{
  j = nlohmann::json::object();
  j["text"] = g.text;
  if (g.token_log_probs)
    j["token_log_probs"] = *g.token_log_probs;
  if (std::isfinite(g.raw_seq_prob))
    j["raw_seq_prob"] = g.raw_seq_prob;
  if (std::isfinite(g.norm_seq_prob))
    j["norm_seq_prob"] = g.norm_seq_prob;
  if (g.cluster_id)
    j["cluster_id"] = *g.cluster_id;
  if (g.is_correct)
    j["is_correct"] = *g.is_correct;
}

void from_json(const nlohmann::json& j, GenerationRecord& g)
{
  g = GenerationRecord{};
  g.text = j.at("text").get<std::string>();
  if (auto it = j.find("token_log_probs"); it != j.end() && !it->is_null())
    g.token_log_probs = it->get<std::vector<double>>();
  g.raw_seq_prob = kNaN;
  g.norm_seq_prob = kNaN;
  if (auto it = j.find("raw_seq_prob"); it != j.end() && !it->is_null())
    g.raw_seq_prob = it->get<double>();
  if (auto it = j.find("norm_seq_prob"); it != j.end() && !it->is_null())
    g.norm_seq_prob = it->get<double>();
  if (auto it = j.find("cluster_id"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<long long>() < 0)
      throw ValidationError("field cluster_id must be a nonnegative integer");
    g.cluster_id = it->get<std::size_t>();
  }
  if (auto it = j.find("is_correct"); it != j.end() && !it->is_null())
    g.is_correct = it->get<bool>();
}

void to_json(nlohmann::json& j, const QuestionBundle& b)
{
  j = nlohmann::json{ { "question_id", b.question_id },
                      { "prompt", b.prompt },
                      { "generations", b.generations },
                      { "metadata", b.metadata } };
}

void from_json(const nlohmann::json& j, QuestionBundle& b)
{
  b = QuestionBundle{};
  b.question_id = j.at("question_id").get<std::string>();
  b.prompt = j.value("prompt", std::string());
  b.generations = j.at("generations").get<std::vector<GenerationRecord>>();
  if (auto it = j.find("metadata"); it != j.end() && !it->is_null()) {
    for (const auto& [key, value] : it->items())
      b.metadata[key] = value.is_string() ? value.get<std::string>() : value.dump();
  }
}

void ExperimentRun::validate() const
{
  std::map<std::string, int> seen;
  for (const auto& b : bundles)
    ++seen[b.question_id];
  for (const auto& [method, scores] : method_scores) {
    for (const auto& [qid, score] : scores) {
      auto it = seen.find(qid);
      if (it == seen.end())
        throw ValidationError("method " + method + " scores unknown question '" + qid + "'");
      if (it->second != 1)
        throw ValidationError("question '" + qid + "' appears in " + std::to_string(it->second) +
                              " bundles");
    }
  }
}

void to_json(nlohmann::json& j, const ExperimentRun& r)
{
  j = nlohmann::json{ { "bundles", r.bundles },
                      { "method_scores", r.method_scores },
                      { "config", r.config } };
}

void from_json(const nlohmann::json& j, ExperimentRun& r)
{
  r = ExperimentRun{};
  r.bundles = j.at("bundles").get<std::vector<QuestionBundle>>();
  r.method_scores = j.at("method_scores").get<std::map<std::string, std::map<std::string, double>>>();
  r.config = j.at("config").get<RunConfig>();
}

std::vector<QuestionBundle> read_bundles(std::istream& in, RecordFormat format)
{
  std::vector<QuestionBundle> bundles;
  if (format == RecordFormat::json_array) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_array())
      throw ValidationError("expected a JSON array of bundles");
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const std::string where = "element " + std::to_string(i);
      try {
        auto b = doc[i].get<QuestionBundle>();
        validate_and_normalize(b, where);
        bundles.push_back(std::move(b));
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(where + ": " + e.what());
      }
    }
    return bundles;
  }

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    const std::string where = "line " + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": malformed JSON: " + e.what());
    }
    try {
      auto b = j.get<QuestionBundle>();
      validate_and_normalize(b, where);
      bundles.push_back(std::move(b));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      throw ValidationError(msg.rfind(where, 0) == 0 ? msg : where + ": " + msg);
    }
  }
  return bundles;
}

std::vector<QuestionBundle> load_bundles(const std::filesystem::path& path, RecordFormat format)
{
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open " + path.string());
  return read_bundles(in, format);
}

void write_bundles(std::ostream& out, const std::vector<QuestionBundle>& bundles)
{
  for (const auto& b : bundles)
    out << nlohmann::json(b).dump() << '\n';
}

} // namespace semuq

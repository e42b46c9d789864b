#include "semuq/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>

#include "semuq/error.hpp"

namespace semuq {

namespace {

std::string trim(const std::string& s)
{
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos)
    return {};
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value)
{
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size() || !std::isfinite(v))
      throw ParameterError("");
    return v;
  } catch (const std::exception&) {
    throw ParameterError("setting '" + key + "': not a number: '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value)
{
  try {
    std::size_t used = 0;
    long long v = std::stoll(value, &used);
    if (used != value.size())
      throw ParameterError("");
    return v;
  } catch (const std::exception&) {
    throw ParameterError("setting '" + key + "': not an integer: '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value)
{
  if (value == "true" || value == "1" || value == "yes")
    return true;
  if (value == "false" || value == "0" || value == "no")
    return false;
  throw ParameterError("setting '" + key + "': not a boolean: '" + value + "'");
}

} // namespace

std::string to_string(LogBase base)
{
  return base == LogBase::base10 ? "10" : "e";
}

LogBase parse_log_base(const std::string& text)
{
  if (text == "10")
    return LogBase::base10;
  if (text == "e" || text == "natural")
    return LogBase::natural;
  throw ParameterError("log base must be '10' or 'e', got '" + text + "'");
}

std::string to_string(PerturbationDirection dir)
{
  switch (dir) {
    case PerturbationDirection::uniform:
      return "uniform";
    case PerturbationDirection::along_weights:
      return "along-weights";
    case PerturbationDirection::random:
      return "random";
  }
  return "uniform";
}

PerturbationDirection parse_perturbation_direction(const std::string& text)
{
  if (text == "uniform")
    return PerturbationDirection::uniform;
  if (text == "along-weights")
    return PerturbationDirection::along_weights;
  if (text == "random")
    return PerturbationDirection::random;
  throw ParameterError("unknown perturbation direction '" + text + "'");
}

std::string to_string(BackendKind kind)
{
  switch (kind) {
    case BackendKind::exact_match:
      return "exact";
    case BackendKind::precomputed:
      return "precomputed";
    case BackendKind::external_service:
      return "service";
    case BackendKind::record_cluster_ids:
      return "cluster-ids";
  }
  return "exact";
}

BackendKind parse_backend_kind(const std::string& text)
{
  if (text == "exact" || text == "exact-match")
    return BackendKind::exact_match;
  if (text == "precomputed")
    return BackendKind::precomputed;
  if (text == "service" || text == "external-service")
    return BackendKind::external_service;
  if (text == "cluster-ids")
    return BackendKind::record_cluster_ids;
  throw ParameterError("unknown entailment backend '" + text + "'");
}

void CalibrationConfig::validate() const
{
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ParameterError("calibration lambda must be a nonnegative finite number");
  if (max_iters <= 0)
    throw ParameterError("calibration max_iters must be positive");
  if (!(step_size > 0.0))
    throw ParameterError("calibration step_size must be positive");
  if (!(stop_delta > 0.0))
    throw ParameterError("calibration stop_delta must be positive");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 0.5))
    throw ParameterError("calibration clip epsilon must lie in (0, 0.5)");
  if (max_halvings < 0)
    throw ParameterError("calibration max_halvings must be nonnegative");
}

void RunConfig::validate() const
{
  if (spins < 2 || spins > 14)
    throw ParameterError("spins must lie in [2, 14]");
  if (locality < 0 || locality > spins - 1)
    throw ParameterError("locality must lie in [0, spins - 1]");
  if (!(sigma > 0.0))
    throw ParameterError("sigma must be positive");
  if (!(epsilon > 0.0))
    throw ParameterError("epsilon must be positive");
  if (m_adj < 1 || static_cast<std::size_t>(m_adj) > grid_size())
    throw ParameterError("m_adj must lie in [1, 2^spins]");
  if (!(null_tolerance > 0.0) || !(degeneracy_guard > 0.0))
    throw ParameterError("tolerances must be positive");
  if (backend.retries < 1)
    throw ParameterError("backend retries must be at least 1");
  calibration.validate();
}

void apply_setting(RunConfig& c, const std::string& raw_key, const std::string& raw_value)
{
  std::string key = trim(raw_key);
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string value = trim(raw_value);

  if (key == "spins" || key == "L")
    c.spins = static_cast<int>(parse_int(key, value));
  else if (key == "locality")
    c.locality = static_cast<int>(parse_int(key, value));
  else if (key == "sigma")
    c.sigma = parse_double(key, value);
  else if (key == "epsilon")
    c.epsilon = parse_double(key, value);
  else if (key == "m_adj")
    c.m_adj = static_cast<int>(parse_int(key, value));
  else if (key == "lambda")
    c.calibration.lambda = parse_double(key, value);
  else if (key == "log_base" || key == "base")
    c.log_base = parse_log_base(value);
  else if (key == "direction")
    c.direction = parse_perturbation_direction(value);
  else if (key == "seed")
    c.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "weighted_kme")
    c.weighted_kme = parse_bool(key, value);
  else if (key == "null_tolerance")
    c.null_tolerance = parse_double(key, value);
  else if (key == "degeneracy_guard")
    c.degeneracy_guard = parse_double(key, value);
  else if (key == "workers")
    c.workers = static_cast<int>(parse_int(key, value));
  else if (key == "max_iters")
    c.calibration.max_iters = static_cast<int>(parse_int(key, value));
  else if (key == "step_size")
    c.calibration.step_size = parse_double(key, value);
  else if (key == "stop_delta")
    c.calibration.stop_delta = parse_double(key, value);
  else if (key == "clip_epsilon")
    c.calibration.clip_epsilon = parse_double(key, value);
  else if (key == "backend")
    c.backend.kind = parse_backend_kind(value);
  else if (key == "endpoint")
    c.backend.endpoint = value;
  else if (key == "prompt_template")
    c.backend.prompt_template = value;
  else if (key == "retries")
    c.backend.retries = static_cast<int>(parse_int(key, value));
  else if (key == "concatenate_question")
    c.backend.concatenate_question = parse_bool(key, value);
  else
    throw ParameterError("unknown setting '" + key + "'");
}

void apply_config_file(RunConfig& config, std::istream& in)
{
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    if (trim(line).empty())
      continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError("config line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(config, line.substr(0, eq), line.substr(eq + 1));
  }
}

void to_json(nlohmann::json& j, const RunConfig& c)
{
  j = nlohmann::json{
    { "spins", c.spins },
    { "locality", c.locality },
    { "sigma", c.sigma },
    { "epsilon", c.epsilon },
    { "m_adj", c.m_adj },
    { "lambda", c.calibration.lambda },
    { "log_base", to_string(c.log_base) },
    { "direction", to_string(c.direction) },
    { "seed", c.seed },
    { "weighted_kme", c.weighted_kme },
    { "null_tolerance", c.null_tolerance },
    { "degeneracy_guard", c.degeneracy_guard },
    { "workers", c.workers },
    { "max_iters", c.calibration.max_iters },
    { "step_size", c.calibration.step_size },
    { "stop_delta", c.calibration.stop_delta },
    { "clip_epsilon", c.calibration.clip_epsilon },
    { "backend", to_string(c.backend.kind) },
    { "endpoint", c.backend.endpoint },
    { "prompt_template", c.backend.prompt_template },
    { "retries", c.backend.retries },
    { "concatenate_question", c.backend.concatenate_question },
  };
}

void from_json(const nlohmann::json& j, RunConfig& c)
{
  c = RunConfig{};
  c.spins = j.value("spins", c.spins);
  c.locality = j.value("locality", c.locality);
  c.sigma = j.value("sigma", c.sigma);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.m_adj = j.value("m_adj", c.m_adj);
  c.calibration.lambda = j.value("lambda", c.calibration.lambda);
  c.log_base = parse_log_base(j.value("log_base", std::string("10")));
  c.direction = parse_perturbation_direction(j.value("direction", std::string("uniform")));
  c.seed = j.value("seed", c.seed);
  c.weighted_kme = j.value("weighted_kme", c.weighted_kme);
  c.null_tolerance = j.value("null_tolerance", c.null_tolerance);
  c.degeneracy_guard = j.value("degeneracy_guard", c.degeneracy_guard);
  c.workers = j.value("workers", c.workers);
  c.calibration.max_iters = j.value("max_iters", c.calibration.max_iters);
  c.calibration.step_size = j.value("step_size", c.calibration.step_size);
  c.calibration.stop_delta = j.value("stop_delta", c.calibration.stop_delta);
  c.calibration.clip_epsilon = j.value("clip_epsilon", c.calibration.clip_epsilon);
  c.backend.kind = parse_backend_kind(j.value("backend", std::string("exact")));
  c.backend.endpoint = j.value("endpoint", std::string());
  c.backend.prompt_template = j.value("prompt_template", std::string());
  c.backend.retries = j.value("retries", c.backend.retries);
  c.backend.concatenate_question = j.value("concatenate_question", true);
}

bool operator==(const CalibrationConfig& a, const CalibrationConfig& b)
{
  return a.lambda == b.lambda && a.max_iters == b.max_iters && a.step_size == b.step_size &&
         a.stop_delta == b.stop_delta && a.clip_epsilon == b.clip_epsilon &&
         a.max_halvings == b.max_halvings;
}

bool operator==(const BackendConfig& a, const BackendConfig& b)
{
  return a.kind == b.kind && a.endpoint == b.endpoint && a.prompt_template == b.prompt_template &&
         a.retries == b.retries && a.concatenate_question == b.concatenate_question;
}

bool operator==(const RunConfig& a, const RunConfig& b)
{
  return a.spins == b.spins && a.locality == b.locality && a.sigma == b.sigma &&
         a.epsilon == b.epsilon && a.m_adj == b.m_adj && a.log_base == b.log_base &&
         a.direction == b.direction && a.seed == b.seed && a.weighted_kme == b.weighted_kme &&
         a.null_tolerance == b.null_tolerance && a.degeneracy_guard == b.degeneracy_guard &&
         a.workers == b.workers && a.calibration == b.calibration && a.backend == b.backend;
}

} // namespace semuq

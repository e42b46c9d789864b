#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

#include <json.hpp>

namespace semuq {

enum class LogBase
{
  base10,
  natural
};

std::string to_string(LogBase base);
LogBase parse_log_base(const std::string& text);

/// Direction of the weight perturbation applied to the fitted Hamiltonian.
enum class PerturbationDirection
{
  uniform,       ///< all-ones direction, normalized
  along_weights, ///< parallel to the fitted weights (leaves eigenvectors fixed)
  random         ///< seeded Gaussian direction, normalized
};

std::string to_string(PerturbationDirection dir);
PerturbationDirection parse_perturbation_direction(const std::string& text);

enum class BackendKind
{
  exact_match,
  precomputed,
  external_service,
  record_cluster_ids ///< trust the cluster_id carried by each record
};

std::string to_string(BackendKind kind);
BackendKind parse_backend_kind(const std::string& text);

struct CalibrationConfig
{
  double lambda = 1.0;
  int max_iters = 500;
  double step_size = 0.05;
  double stop_delta = 1e-7;
  double clip_epsilon = 1e-6;
  int max_halvings = 20;

  void validate() const;
};

struct BackendConfig
{
  BackendKind kind = BackendKind::exact_match;
  std::string endpoint;       ///< URL of the external entailment service
  std::string prompt_template; ///< empty selects the built-in template
  int retries = 3;
  bool concatenate_question = true;
};

/// Knobs of one scoring run. Field names double as config-file keys.
struct RunConfig
{
  int spins = 8;         ///< L; the grid has 2^L points
  int locality = 1;      ///< coupling radius of the operator basis
  double sigma = 0.05;   ///< kernel bandwidth
  double epsilon = 0.01; ///< perturbation magnitude
  int m_adj = 8;         ///< modes averaged around the KME mode
  LogBase log_base = LogBase::base10;
  PerturbationDirection direction = PerturbationDirection::uniform;
  std::uint64_t seed = 0;
  bool weighted_kme = true;
  double null_tolerance = 1e-8;
  double degeneracy_guard = 1e-8;
  int workers = 0; ///< 0 selects hardware concurrency
  CalibrationConfig calibration;
  BackendConfig backend;

  std::size_t grid_size() const { return std::size_t{1} << spins; }
  void validate() const;
};

/// Applies one `key = value` setting; unknown keys raise ParameterError.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Reads a flat `key = value` file (`#` starts a comment).
void apply_config_file(RunConfig& config, std::istream& in);

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

bool operator==(const CalibrationConfig& a, const CalibrationConfig& b);
bool operator==(const BackendConfig& a, const BackendConfig& b);
bool operator==(const RunConfig& a, const RunConfig& b);

} // namespace semuq

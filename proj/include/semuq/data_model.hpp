#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "semuq/config.hpp"

namespace semuq {

/// One sampled answer to a prompt.
struct GenerationRecord
{
  std::string text;
  /// Natural-log conditional probabilities of each generated token.
  std::optional<std::vector<double>> token_log_probs;
  /// Product of token probabilities (unnormalized sequence probability).
  double raw_seq_prob = 0.0;
  /// Sequence probability after normalization within the question.
  double norm_seq_prob = 0.0;
  std::optional<std::size_t> cluster_id;
  std::optional<bool> is_correct;

  bool operator==(const GenerationRecord&) const = default;
};

/// A prompt together with its R repeated generations.
struct QuestionBundle
{
  std::string question_id;
  std::string prompt;
  std::vector<GenerationRecord> generations;
  std::map<std::string, std::string> metadata;

  std::size_t size() const { return generations.size(); }

  /// Normalized sequence probabilities in generation order.
  Eigen::VectorXd normalized_probabilities() const;

  bool operator==(const QuestionBundle&) const = default;
};

struct ExperimentRun
{
  std::vector<QuestionBundle> bundles;
  /// method name -> question_id -> uncertainty score
  std::map<std::string, std::map<std::string, double>> method_scores;
  RunConfig config;

  /// Throws ValidationError unless every scored question_id names exactly one bundle.
  void validate() const;

  bool operator==(const ExperimentRun&) const = default;
};

enum class RecordFormat
{
  jsonl,     ///< one QuestionBundle object per line
  json_array ///< a single JSON array of bundles
};

/// Sum of token log-probabilities; the log of the sequence probability.
double sequence_log_probability(std::span<const double> token_log_probs);

/// Divides every entry by the total. Entries must be positive.
Eigen::VectorXd normalize_sequence_probabilities(const Eigen::Ref<const Eigen::VectorXd>& raw);

/// Same as normalize_sequence_probabilities but from log-probabilities, which
/// survives sequences whose raw probability underflows.
Eigen::VectorXd normalize_log_probabilities(const Eigen::Ref<const Eigen::VectorXd>& log_probs);

/// Checks record invariants, derives raw_seq_prob from token_log_probs when
/// needed and fills norm_seq_prob when absent. `where` prefixes error text.
void validate_and_normalize(QuestionBundle& bundle, const std::string& where = {});

std::vector<QuestionBundle> load_bundles(const std::filesystem::path& path,
                                         RecordFormat format = RecordFormat::jsonl);
std::vector<QuestionBundle> read_bundles(std::istream& in,
                                         RecordFormat format = RecordFormat::jsonl);
void write_bundles(std::ostream& out, const std::vector<QuestionBundle>& bundles);

void to_json(nlohmann::json& j, const GenerationRecord& g);
void from_json(const nlohmann::json& j, GenerationRecord& g);
void to_json(nlohmann::json& j, const QuestionBundle& b);
void from_json(const nlohmann::json& j, QuestionBundle& b);
void to_json(nlohmann::json& j, const ExperimentRun& r);
void from_json(const nlohmann::json& j, ExperimentRun& r);

} // namespace semuq

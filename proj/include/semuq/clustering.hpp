#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "semuq/config.hpp"
#include "semuq/data_model.hpp"
#include "semuq/error.hpp"

namespace semuq {

enum class Verdict
{
  entailment,
  contradiction,
  neutral
};

std::string to_string(Verdict v);

/// Parses a verdict out of free text: the first of the three verdict words
/// found (case-insensitive). Throws ProtocolError carrying `raw` otherwise.
Verdict parse_verdict(std::string_view raw);

/// The entailment prompt used when no template override is configured.
/// Placeholders: {question}, {text1}, {text2}.
extern const char* const kDefaultEntailmentTemplate;

/// A generation as seen by an entailment backend.
struct Candidate
{
  std::size_t index;
  std::string_view text;
};

/// Judges whether one answer entails another. Implementations must be safe
/// to call concurrently from different bundles.
class EntailmentBackend
{
public:
  virtual ~EntailmentBackend() = default;

  virtual Verdict judge(std::string_view question,
                        const Candidate& premise,
                        const Candidate& hypothesis) const = 0;

  /// True iff both directions are judged `entailment`.
  virtual bool bidirectional(std::string_view question, const Candidate& a, const Candidate& b) const
  {
    return judge(question, a, b) == Verdict::entailment &&
           judge(question, b, a) == Verdict::entailment;
  }

  /// Called before a bundle of `generations` answers is clustered.
  virtual void check_bundle_size(std::size_t /*generations*/) const {}
};

struct NormalizerOptions
{
  bool lowercase = true;
  bool collapse_whitespace = true;
  bool strip_terminal_punctuation = true;
};

/// Lowercase, trim, collapse internal whitespace, strip terminal punctuation.
std::string normalize_answer(std::string_view text, const NormalizerOptions& options = {});

/// Two answers are equivalent iff their normalized forms are equal.
class ExactMatchBackend final : public EntailmentBackend
{
public:
  explicit ExactMatchBackend(NormalizerOptions options = {})
    : options_(options)
  {
  }

  Verdict judge(std::string_view question,
                const Candidate& premise,
                const Candidate& hypothesis) const override;
  bool bidirectional(std::string_view question, const Candidate& a, const Candidate& b) const override;

private:
  NormalizerOptions options_;
};

/// Square matrix of verdicts, row = premise index, column = hypothesis index.
using VerdictMatrix = std::vector<std::vector<Verdict>>;

/// Looks verdicts up by generation index in a precomputed R x R matrix.
class PrecomputedBackend final : public EntailmentBackend
{
public:
  /// Throws ValidationError unless the matrix is square with an entailment diagonal.
  explicit PrecomputedBackend(VerdictMatrix verdicts);

  Verdict judge(std::string_view question,
                const Candidate& premise,
                const Candidate& hypothesis) const override;
  void check_bundle_size(std::size_t generations) const override;

  std::size_t size() const { return verdicts_.size(); }

private:
  VerdictMatrix verdicts_;
};

/// Posts `{question, text1, text2, template}` to an HTTP endpoint and reads
/// `{verdict}` back. Transport failures are retried.
class ServiceBackend final : public EntailmentBackend
{
public:
  explicit ServiceBackend(BackendConfig config);

  Verdict judge(std::string_view question,
                const Candidate& premise,
                const Candidate& hypothesis) const override;

  const std::string& prompt_template() const { return template_; }

private:
  BackendConfig config_;
  std::string template_;
  std::string scheme_host_port_;
  std::string path_;
};

bool bidirectional_entails(const EntailmentBackend& backend,
                           std::string_view question,
                           const Candidate& a,
                           const Candidate& b);

/// Convenience overload for text-only backends (index 0 and 1 are passed).
bool bidirectional_entails(const EntailmentBackend& backend,
                           std::string_view question,
                           std::string_view a,
                           std::string_view b);

struct Cluster
{
  std::size_t cluster_id = 0;
  std::vector<std::size_t> member_indices;
  std::size_t representative_index = 0;

  bool operator==(const Cluster&) const = default;
};

struct SemanticClustering
{
  std::vector<Cluster> clusters;
  std::size_t generation_count = 0;

  std::size_t size() const { return clusters.size(); }
  /// Position of the cluster holding each generation.
  std::vector<std::size_t> labels() const;
  std::vector<std::size_t> sizes() const;
  /// Throws ValidationError unless the clusters partition 0..R-1.
  void check_partition() const;

  bool operator==(const SemanticClustering&) const = default;
};

/// Backend failure attributed to a (generation, representative) pair.
class EntailmentError : public Error
{
public:
  EntailmentError(std::size_t generation, std::size_t representative, const std::string& what)
    : Error("entailment check of generation " + std::to_string(generation) +
            " against representative " + std::to_string(representative) + " failed: " + what)
    , generation_index(generation)
    , representative_index(representative)
  {
  }

  std::size_t generation_index;
  std::size_t representative_index;
};

/// Greedy single pass: each generation joins the first cluster whose
/// representative it bidirectionally entails, else founds a new cluster.
SemanticClustering assign_clusters(const QuestionBundle& bundle, const EntailmentBackend& backend);

/// Builds the clustering from the cluster_id carried by every record.
/// Clusters are ordered by ascending id.
SemanticClustering clustering_from_record_ids(const QuestionBundle& bundle);

/// Sum of member probabilities per cluster over the total, in cluster order.
Eigen::VectorXd cluster_probabilities(const SemanticClustering& clustering,
                                      const Eigen::Ref<const Eigen::VectorXd>& seq_probs);
Eigen::VectorXd cluster_probabilities(const SemanticClustering& clustering, const QuestionBundle& bundle);

/// Membership count over R.
Eigen::VectorXd discrete_cluster_probabilities(const SemanticClustering& clustering);

} // namespace semuq

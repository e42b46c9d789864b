#include "semuq/clustering.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace semuq {

const char* const kDefaultEntailmentTemplate =
  "We are evaluating answers to the question: {question}\n"
  "\n"
  "Here are two possible answers:\n"
  "Possible Answer 1: {text1}\n"
  "Possible Answer 2: {text2}\n"
  "\n"
  "Does Possible Answer 1 semantically entail Possible Answer 2?\n"
  "Respond with: entailment, contradiction, or neutral.";

std::string to_string(Verdict v)
{
  switch (v) {
    case Verdict::entailment:
      return "entailment";
    case Verdict::contradiction:
      return "contradiction";
    case Verdict::neutral:
      return "neutral";
  }
  return "neutral";
}

Verdict parse_verdict(std::string_view raw)
{
  std::string lower(raw);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  const std::pair<const char*, Verdict> words[] = { { "entailment", Verdict::entailment },
                                                    { "contradiction", Verdict::contradiction },
                                                    { "neutral", Verdict::neutral } };
  std::size_t best = std::string::npos;
  Verdict verdict = Verdict::neutral;
  for (const auto& [word, v] : words) {
    if (auto pos = lower.find(word); pos != std::string::npos && pos < best) {
      best = pos;
      verdict = v;
    }
  }
  if (best == std::string::npos)
    throw ProtocolError("unparseable entailment verdict", std::string(raw));
  return verdict;
}

std::string normalize_answer(std::string_view text, const NormalizerOptions& options)
{
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (options.collapse_whitespace) {
        pending_space = !out.empty();
        continue;
      }
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(options.lowercase ? static_cast<char>(std::tolower(c)) : ch);
  }
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto is_terminal = [](char c) {
    return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
  };
  while (!out.empty()) {
    const auto back = static_cast<unsigned char>(out.back());
    if (is_space(back) || (options.strip_terminal_punctuation && is_terminal(out.back())))
      out.pop_back();
    else
      break;
  }
  auto first = std::find_if_not(out.begin(), out.end(), [&](char c) { return is_space(static_cast<unsigned char>(c)); });
  out.erase(out.begin(), first);
  return out;
}

Verdict ExactMatchBackend::judge(std::string_view,
                                 const Candidate& premise,
                                 const Candidate& hypothesis) const
{
  return normalize_answer(premise.text, options_) == normalize_answer(hypothesis.text, options_)
           ? Verdict::entailment
           : Verdict::neutral;
}

bool ExactMatchBackend::bidirectional(std::string_view question, const Candidate& a, const Candidate& b) const
{
  return judge(question, a, b) == Verdict::entailment;
}

PrecomputedBackend::PrecomputedBackend(VerdictMatrix verdicts)
  : verdicts_(std::move(verdicts))
{
  const std::size_t n = verdicts_.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (verdicts_[i].size() != n)
      throw ValidationError("precomputed entailment matrix is not square (row " + std::to_string(i) +
                            " has " + std::to_string(verdicts_[i].size()) + " entries, expected " +
                            std::to_string(n) + ")");
    if (verdicts_[i][i] != Verdict::entailment)
      throw ValidationError("precomputed entailment matrix diagonal entry " + std::to_string(i) +
                            " is not entailment");
  }
}

Verdict PrecomputedBackend::judge(std::string_view,
                                  const Candidate& premise,
                                  const Candidate& hypothesis) const
{
  if (premise.index >= verdicts_.size() || hypothesis.index >= verdicts_.size())
    throw ParameterError("generation index outside the precomputed entailment matrix");
  return verdicts_[premise.index][hypothesis.index];
}

void PrecomputedBackend::check_bundle_size(std::size_t generations) const
{
  if (generations != verdicts_.size())
    throw ValidationError("precomputed entailment matrix has side " + std::to_string(verdicts_.size()) +
                          " but the bundle has " + std::to_string(generations) + " generations");
}

bool bidirectional_entails(const EntailmentBackend& backend,
                           std::string_view question,
                           const Candidate& a,
                           const Candidate& b)
{
  if (a.text.empty() || b.text.empty())
    throw ParameterError("entailment inputs must be nonempty");
  return backend.bidirectional(question, a, b);
}

bool bidirectional_entails(const EntailmentBackend& backend,
                           std::string_view question,
                           std::string_view a,
                           std::string_view b)
{
  return bidirectional_entails(backend, question, Candidate{ 0, a }, Candidate{ 1, b });
}

std::vector<std::size_t> SemanticClustering::labels() const
{
  std::vector<std::size_t> out(generation_count, 0);
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (std::size_t i : clusters[c].member_indices)
      out.at(i) = c;
  return out;
}

std::vector<std::size_t> SemanticClustering::sizes() const
{
  std::vector<std::size_t> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters)
    out.push_back(c.member_indices.size());
  return out;
}

void SemanticClustering::check_partition() const
{
  std::vector<int> hits(generation_count, 0);
  for (const auto& c : clusters) {
    if (c.member_indices.empty())
      throw ValidationError("cluster " + std::to_string(c.cluster_id) + " is empty");
    if (std::find(c.member_indices.begin(), c.member_indices.end(), c.representative_index) ==
        c.member_indices.end())
      throw ValidationError("representative of cluster " + std::to_string(c.cluster_id) +
                            " is not a member");
    for (std::size_t i : c.member_indices) {
      if (i >= generation_count)
        throw ValidationError("member index " + std::to_string(i) + " out of range");
      ++hits[i];
    }
  }
  for (std::size_t i = 0; i < generation_count; ++i)
    if (hits[i] != 1)
      throw ValidationError("generation " + std::to_string(i) + " belongs to " + std::to_string(hits[i]) +
                            " clusters");
}

SemanticClustering assign_clusters(const QuestionBundle& bundle, const EntailmentBackend& backend)
{
  backend.check_bundle_size(bundle.size());
  SemanticClustering out;
  out.generation_count = bundle.size();

  for (std::size_t i = 0; i < bundle.size(); ++i) {
    const Candidate current{ i, bundle.generations[i].text };
    bool placed = false;
    for (auto& cluster : out.clusters) {
      const std::size_t rep = cluster.representative_index;
      bool same = false;
      try {
        same = bidirectional_entails(backend, bundle.prompt, current,
                                     Candidate{ rep, bundle.generations[rep].text });
      } catch (const Error& e) {
        throw EntailmentError(i, rep, e.what());
      }
      if (same) {
        cluster.member_indices.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed)
      out.clusters.push_back(Cluster{ out.clusters.size(), { i }, i });
  }
  return out;
}

SemanticClustering clustering_from_record_ids(const QuestionBundle& bundle)
{
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    const auto& id = bundle.generations[i].cluster_id;
    if (!id)
      throw ValidationError("bundle '" + bundle.question_id + "': generations[" + std::to_string(i) +
                            "].cluster_id is missing");
    groups[*id].push_back(i);
  }
  SemanticClustering out;
  out.generation_count = bundle.size();
  for (auto& [id, members] : groups)
    out.clusters.push_back(Cluster{ id, members, members.front() });
  return out;
}

Eigen::VectorXd cluster_probabilities(const SemanticClustering& clustering,
                                      const Eigen::Ref<const Eigen::VectorXd>& seq_probs)
{
  if (static_cast<std::size_t>(seq_probs.size()) != clustering.generation_count)
    throw ParameterError("probability vector length does not match the clustering");
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(clustering.size()));
  for (std::size_t c = 0; c < clustering.size(); ++c)
    for (std::size_t i : clustering.clusters[c].member_indices)
      mass[static_cast<Eigen::Index>(c)] += seq_probs[static_cast<Eigen::Index>(i)];
  const double total = mass.sum();
  if (!(total > 0.0))
    throw DegenerateInputError("cluster probabilities: total probability mass is zero");
  return mass / total;
}

Eigen::VectorXd cluster_probabilities(const SemanticClustering& clustering, const QuestionBundle& bundle)
{
  return cluster_probabilities(clustering, bundle.normalized_probabilities());
}

Eigen::VectorXd discrete_cluster_probabilities(const SemanticClustering& clustering)
{
  if (clustering.size() == 0 || clustering.generation_count == 0)
    throw DegenerateInputError("discrete cluster probabilities of an empty clustering");
  Eigen::VectorXd p(static_cast<Eigen::Index>(clustering.size()));
  for (std::size_t c = 0; c < clustering.size(); ++c)
    p[static_cast<Eigen::Index>(c)] = static_cast<double>(clustering.clusters[c].member_indices.size()) /
                                      static_cast<double>(clustering.generation_count);
  return p;
}

} // namespace semuq

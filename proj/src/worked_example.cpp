#include "semuq/worked_example.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

namespace semuq {

WorkedExampleFixture worked_example_fixture()
{
  WorkedExampleFixture f;
  f.question = "Which oil producer is a close ally of the United States?";
  f.rows = { { "Russia", 1, 0.05899, false },       { "Saudi Arabia", 2, 0.57761, true },
             { "Saudi Arabia", 2, 0.57761, true },  { "Iran", 3, 0.07227, false },
             { "Saudi Arabia", 2, 0.57761, true },  { "Kuwait", 4, 0.08940, false },
             { "Qatar", 5, 0.02185, false },        { "Saudi Arabia", 2, 0.57761, true },
             { "Iraq", 6, 0.12086, false },         { "Saudi Arabia", 2, 0.57761, true } };
  f.calibrated_cluster_probs = { 0.02223, 0.85880, 0.02697, 0.03488, 0.01214, 0.04498 };
  return f;
}

QuestionBundle to_bundle(const WorkedExampleFixture& fixture)
{
  QuestionBundle b;
  b.question_id = "worked-example";
  b.prompt = fixture.question;
  for (const auto& row : fixture.rows) {
    GenerationRecord g;
    g.text = row.text;
    g.raw_seq_prob = row.raw_prob;
    g.norm_seq_prob = std::nan("");
    g.cluster_id = row.cluster_id;
    g.is_correct = row.is_correct;
    b.generations.push_back(g);
  }
  validate_and_normalize(b, "worked example");
  return b;
}

WorkedExampleResult compute_worked_example(const WorkedExampleFixture& fixture, LogBase base)
{
  WorkedExampleResult r;
  r.bundle = to_bundle(fixture);
  r.clustering = clustering_from_record_ids(r.bundle);
  r.normalized = r.bundle.normalized_probabilities();
  r.cluster_probs = cluster_probabilities(r.clustering, r.normalized);
  r.calibrated_cluster_probs =
    Eigen::Map<const Eigen::VectorXd>(fixture.calibrated_cluster_probs.data(),
                                      static_cast<Eigen::Index>(fixture.calibrated_cluster_probs.size()));
  r.report = entropy_report(r.bundle, r.clustering, r.calibrated_cluster_probs, base);
  return r;
}

std::vector<GoldenCheck> check_worked_example(const WorkedExampleResult& result)
{
  const double scale = result.report.log_base == LogBase::natural ? std::numbers::ln10 : 1.0;

  // Index of the cluster holding the first "Saudi Arabia" generation.
  std::size_t saudi_row = 0;
  while (saudi_row < result.bundle.size() && result.bundle.generations[saudi_row].text != "Saudi Arabia")
    ++saudi_row;
  const auto saudi_cluster = static_cast<Eigen::Index>(result.clustering.labels().at(saudi_row));

  std::vector<GoldenCheck> checks = {
    { "NE", 0.84557 * scale, result.report.naive_entropy, 5e-4 * scale },
    { "SE_S", 0.22471 * scale, result.report.shannon_semantic, 5e-4 * scale },
    { "SE_R+", 0.12951 * scale, result.report.renyi_semantic_calibrated, 5e-4 * scale },
    { "p_s(Saudi Arabia)", 0.17765, result.normalized[static_cast<Eigen::Index>(saudi_row)], 5e-5 },
    { "p_c(Saudi Arabia)", 0.88824, result.cluster_probs[saudi_cluster], 5e-5 },
    { "p_c*(Saudi Arabia)^2", 0.73754, result.report.per_cluster_terms.at(static_cast<std::size_t>(saudi_cluster)),
      5e-5 },
  };
  for (auto& c : checks)
    c.ok = std::abs(c.actual - c.expected) <= c.tolerance;
  return checks;
}

void print_worked_example(std::ostream& out, const WorkedExampleResult& r, const std::vector<GoldenCheck>& checks)
{
  const auto labels = r.clustering.labels();
  const auto base = r.report.log_base;
  const Eigen::VectorXd ne_terms = shannon_terms(r.normalized, base);

  out << r.bundle.prompt << "\n\n";
  out << std::left << std::setw(14) << "generation" << std::right << std::setw(8) << "cluster" << std::setw(10)
      << "raw" << std::setw(10) << "p_s" << std::setw(10) << "p_c" << std::setw(10) << "p_c*" << std::setw(10)
      << "NE" << std::setw(10) << "SE_S" << std::setw(10) << "SE_R+" << '\n';
  out << std::fixed << std::setprecision(5);

  std::vector<bool> shown(r.clustering.size(), false);
  for (std::size_t i = 0; i < r.bundle.size(); ++i) {
    const auto& g = r.bundle.generations[i];
    const std::size_t c = labels[i];
    out << std::left << std::setw(14) << g.text << std::right << std::setw(8) << *g.cluster_id << std::setw(10)
        << g.raw_seq_prob << std::setw(10) << r.normalized[static_cast<Eigen::Index>(i)];
    if (!shown[c]) {
      out << std::setw(10) << r.cluster_probs[static_cast<Eigen::Index>(c)] << std::setw(10)
          << r.calibrated_cluster_probs[static_cast<Eigen::Index>(c)] << std::setw(10)
          << ne_terms[static_cast<Eigen::Index>(i)] << std::setw(10) << r.report.shannon_per_cluster_terms[c]
          << std::setw(10) << r.report.per_cluster_terms[c] << '\n';
      shown[c] = true;
    } else {
      out << std::setw(10) << "--" << std::setw(10) << "--" << std::setw(10) << ne_terms[static_cast<Eigen::Index>(i)]
          << std::setw(10) << "--" << std::setw(10) << "--" << '\n';
    }
  }
  double raw_total = 0.0;
  for (const auto& g : r.bundle.generations)
    raw_total += g.raw_seq_prob;
  out << std::left << std::setw(14) << "Total" << std::right << std::setw(8) << "" << std::setw(10) << raw_total << std::setw(10) << r.normalized.sum() << std::setw(10)
      << r.cluster_probs.sum() << std::setw(10) << r.calibrated_cluster_probs.sum() << std::setw(10)
      << r.report.naive_entropy << std::setw(10) << r.report.shannon_semantic << std::setw(10)
      << r.report.renyi_semantic_calibrated << '\n';
  out << "log base: " << to_string(base) << '\n';

  for (const auto& c : checks)
    if (!c.ok)
      out << "MISMATCH " << c.name << ": expected " << c.expected << " +/- " << c.tolerance << ", got " << c.actual
          << " (diff " << std::showpos << c.actual - c.expected << std::noshowpos << ")\n";
  out << std::defaultfloat;
}

} // namespace semuq

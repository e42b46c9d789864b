#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "semuq/clustering.hpp"
#include "semuq/config.hpp"
#include "semuq/data_model.hpp"
#include "semuq/entropy.hpp"

namespace semuq {

/// The ten-generation oil-producer example with its reference cluster
/// probabilities after uncertainty integration.
struct WorkedExampleFixture
{
  struct Row
  {
    std::string text;
    std::size_t cluster_id = 0;
    double raw_prob = 0.0;
    bool is_correct = false;
  };

  std::string question;
  std::vector<Row> rows;
  std::vector<double> calibrated_cluster_probs; ///< ordered by cluster id
};

WorkedExampleFixture worked_example_fixture();

QuestionBundle to_bundle(const WorkedExampleFixture& fixture);

struct WorkedExampleResult
{
  QuestionBundle bundle;
  SemanticClustering clustering;
  Eigen::VectorXd normalized;
  Eigen::VectorXd cluster_probs;
  Eigen::VectorXd calibrated_cluster_probs;
  EntropyReport report;
};

WorkedExampleResult compute_worked_example(const WorkedExampleFixture& fixture, LogBase base = LogBase::base10);

struct GoldenCheck
{
  std::string name;
  double expected = 0.0;
  double actual = 0.0;
  double tolerance = 0.0;
  bool ok = false;
};

/// Compares against the reference totals; log-valued entries are rescaled
/// when the result was computed in natural log.
std::vector<GoldenCheck> check_worked_example(const WorkedExampleResult& result);

/// Prints the per-generation table, the totals and any golden mismatch.
void print_worked_example(std::ostream& out, const WorkedExampleResult& result, const std::vector<GoldenCheck>& checks);

} // namespace semuq

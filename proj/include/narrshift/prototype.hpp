#pragma once

#include <cstdint>
#include <vector>

#include "narrshift/lda.hpp"

namespace narrshift {

/// How many top words of each topic define its comparison support.
/// 0 means the full vocabulary.
struct SimilarityOptions {
  std::size_t top_r = 100;
};

/// Cosine between topic i of `a` and topic j of `b`, computed on the union of
/// the two topics' top-R words. 0 when either restricted vector is zero.
/// Throws std::invalid_argument when the models' vocabulary sizes differ.
double topic_cosine(const TopicModel& a, TopicId i, const TopicModel& b, TopicId j,
                    const SimilarityOptions& options = {});

struct ModelPairSimilarity {
  double value = 0.0;              // mean of the two directional fractions
  double fraction_a = 0.0;         // share of A's topics matched in B
  double fraction_b = 0.0;         // share of B's topics matched in A
  std::vector<bool> matched_a;     // per topic of A
  std::vector<bool> matched_b;     // per topic of B
};

/// A topic of `a` is matched when its best cosine against `b` is strictly
/// greater than its best cosine against the other topics of `a`.
std::vector<bool> matched_topics(const TopicModel& a, const TopicModel& b,
                                 const SimilarityOptions& options = {});
double match_fraction(const TopicModel& a, const TopicModel& b,
                      const SimilarityOptions& options = {});
ModelPairSimilarity model_similarity(const TopicModel& a, const TopicModel& b,
                                     const SimilarityOptions& options = {});

struct PrototypeSelection {
  std::vector<TopicModel> replicas;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> similarity;  // N x N, unit diagonal
  std::vector<std::vector<ModelPairSimilarity>> pairs;  // upper triangle filled
  std::size_t chosen = 0;

  /// Mean off-diagonal similarity of replica i.
  double mean_similarity(std::size_t i) const;
};

/// Scores already-trained models and picks the one with the highest mean
/// off-diagonal similarity; ties go to the lowest index.
PrototypeSelection select_among(std::vector<TopicModel> models,
                                const SimilarityOptions& options = {},
                                unsigned threads = 1);

struct PrototypeRun {
  PrototypeSelection selection;
  AssignmentState chosen_state;  // assignments of the chosen replica
};

/// Trains `replicas` LDAs with seeds config.seed + 0 .. replicas - 1 and
/// selects the prototype. Requires replicas >= 2. A failing replica is
/// rethrown with its index in the message.
PrototypeRun select_prototype(const CorpusSlice& slice, const LdaConfig& config,
                              std::size_t replicas,
                              const SimilarityOptions& options = {},
                              unsigned threads = 1);

/// prototype_report.json payload.
std::string prototype_report_json(const PrototypeSelection& selection);

}  // namespace narrshift

#pragma once

#include "cdp/search.hpp"
#include "cdp/tensor.hpp"
#include "cdp/types.hpp"

#include <vector>

namespace cdp {

enum class Direction { text_to_video, video_to_text };

/// Square similarity matrix for one evaluation set: sim(i, j) is the
/// similarity between video i and the caption assigned to clip j (the mean
/// of clip j's combination elements against video i).
struct RetrievalMatrix {
    Matd sim;
};

/// Percentage of clips whose true match ranks within the top k in the given
/// direction. Ties resolve by index order: a tying competitor with a smaller
/// index pushes the true match down.
double recall_at_k(const RetrievalMatrix& matrix, Direction direction, Index k);

/// Percentage of clips where the video retrieves its own caption at rank 1
/// and that caption retrieves the video at rank 1, both as strict maxima
/// (any tie at the top fails).
double cycle_at_1(const RetrievalMatrix& matrix);

struct SetMetrics {
    Index n_clips = 0;
    double t2v_r1 = 0, t2v_r2 = 0, t2v_r3 = 0;
    double v2t_r1 = 0, v2t_r2 = 0, v2t_r3 = 0;
    double avg_r1 = 0;
    double cycle1 = 0;
};

struct MetricReport {
    SetMetrics overall;                ///< macro-average across sets
    std::vector<SetMetrics> per_set;
};

RetrievalMatrix build_retrieval_matrix(const SimilarityTensor& tensor,
                                       const std::vector<PromptAssignment>& assignments,
                                       const std::vector<Index>& set);

/// Computes all metrics per evaluation set and macro-averages across sets
/// (each set weighted equally). `sets` must partition clips 0..N-1.
MetricReport evaluate_assignments(const SimilarityTensor& tensor,
                                  const std::vector<PromptAssignment>& assignments,
                                  const std::vector<std::vector<Index>>& sets);

/// Monte-Carlo chance baseline over random similarities. Each trial draws an
/// independent random matrix per retrieval direction (chance rankings in the
/// two directions are independent), so expected R@1 is 100/n and expected
/// Cycle@1 is 100/n^2 for a set of n clips.
MetricReport chance_metrics(const std::vector<Index>& set_sizes, Index trials, std::uint64_t seed);

}  // namespace cdp

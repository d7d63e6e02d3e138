#include "cdp/evaluation.hpp"

#include <algorithm>
#include <unordered_set>

namespace cdp {

namespace {

/// Rank of the true match for caption j (text-to-video: rank videos by
/// their similarity to caption j).
Index rank_text_to_video(const Matd& sim, Index j) {
    Index ahead = 0;
    for (Index i = 0; i < sim.rows(); ++i) {
        if (i == j) continue;
        if (sim(i, j) > sim(j, j) || (sim(i, j) == sim(j, j) && i < j)) ++ahead;
    }
    return ahead + 1;
}

/// Rank of the true match for video i (video-to-text: rank captions).
Index rank_video_to_text(const Matd& sim, Index i) {
    Index ahead = 0;
    for (Index j = 0; j < sim.cols(); ++j) {
        if (j == i) continue;
        if (sim(i, j) > sim(i, i) || (sim(i, j) == sim(i, i) && j < i)) ++ahead;
    }
    return ahead + 1;
}

void check_square(const RetrievalMatrix& matrix) {
    if (matrix.sim.rows() != matrix.sim.cols() || matrix.sim.rows() < 1) {
        throw invalid_input("retrieval matrix must be square and non-empty");
    }
    if (!matrix.sim.allFinite()) {
        throw invalid_input("retrieval matrix entries must be finite");
    }
}

SetMetrics metrics_for_matrix(const Matd& t2v_sim, const Matd& v2t_sim) {
    const Index n = t2v_sim.rows();
    SetMetrics m;
    m.n_clips = n;
    Index t2v_hits[3] = {0, 0, 0};
    Index v2t_hits[3] = {0, 0, 0};
    Index cycle_hits = 0;
    for (Index i = 0; i < n; ++i) {
        const Index rt = rank_text_to_video(t2v_sim, i);
        const Index rv = rank_video_to_text(v2t_sim, i);
        for (int k = 0; k < 3; ++k) {
            // R@k for k >= n is trivially 100: every rank fits.
            const Index kk = std::min<Index>(k + 1, n);
            if (rt <= kk) ++t2v_hits[k];
            if (rv <= kk) ++v2t_hits[k];
        }
        bool strict_t2v = true, strict_v2t = true;
        for (Index j = 0; j < n && (strict_t2v || strict_v2t); ++j) {
            if (j == i) continue;
            if (t2v_sim(j, i) >= t2v_sim(i, i)) strict_t2v = false;
            if (v2t_sim(i, j) >= v2t_sim(i, i)) strict_v2t = false;
        }
        if (strict_t2v && strict_v2t) ++cycle_hits;
    }
    const double scale = 100.0 / static_cast<double>(n);
    m.t2v_r1 = scale * t2v_hits[0];
    m.t2v_r2 = scale * t2v_hits[1];
    m.t2v_r3 = scale * t2v_hits[2];
    m.v2t_r1 = scale * v2t_hits[0];
    m.v2t_r2 = scale * v2t_hits[1];
    m.v2t_r3 = scale * v2t_hits[2];
    m.avg_r1 = 0.5 * (m.t2v_r1 + m.v2t_r1);
    m.cycle1 = scale * cycle_hits;
    return m;
}

SetMetrics macro_average(const std::vector<SetMetrics>& sets) {
    SetMetrics avg;
    if (sets.empty()) return avg;
    for (const auto& s : sets) {
        avg.n_clips += s.n_clips;
        avg.t2v_r1 += s.t2v_r1;
        avg.t2v_r2 += s.t2v_r2;
        avg.t2v_r3 += s.t2v_r3;
        avg.v2t_r1 += s.v2t_r1;
        avg.v2t_r2 += s.v2t_r2;
        avg.v2t_r3 += s.v2t_r3;
        avg.avg_r1 += s.avg_r1;
        avg.cycle1 += s.cycle1;
    }
    const double inv = 1.0 / static_cast<double>(sets.size());
    avg.t2v_r1 *= inv;
    avg.t2v_r2 *= inv;
    avg.t2v_r3 *= inv;
    avg.v2t_r1 *= inv;
    avg.v2t_r2 *= inv;
    avg.v2t_r3 *= inv;
    avg.avg_r1 *= inv;
    avg.cycle1 *= inv;
    return avg;
}

}  // namespace

double recall_at_k(const RetrievalMatrix& matrix, Direction direction, Index k) {
    check_square(matrix);
    const Index n = matrix.sim.rows();
    if (k < 1 || k > n) {
        throw invalid_input("recall_at_k: k must lie in [1, n_clips]");
    }
    Index hits = 0;
    for (Index i = 0; i < n; ++i) {
        const Index rank = direction == Direction::text_to_video
                               ? rank_text_to_video(matrix.sim, i)
                               : rank_video_to_text(matrix.sim, i);
        if (rank <= k) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

double cycle_at_1(const RetrievalMatrix& matrix) {
    check_square(matrix);
    const Index n = matrix.sim.rows();
    Index hits = 0;
    for (Index i = 0; i < n; ++i) {
        bool ok = true;
        for (Index j = 0; j < n && ok; ++j) {
            if (j == i) continue;
            if (matrix.sim(i, j) >= matrix.sim(i, i) || matrix.sim(j, i) >= matrix.sim(i, i)) {
                ok = false;
            }
        }
        if (ok) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

RetrievalMatrix build_retrieval_matrix(const SimilarityTensor& tensor,
                                       const std::vector<PromptAssignment>& assignments,
                                       const std::vector<Index>& set) {
    RetrievalMatrix matrix;
    const Index n = static_cast<Index>(set.size());
    matrix.sim.resize(n, n);
    for (Index a = 0; a < n; ++a) {
        for (Index b = 0; b < n; ++b) {
            const Index video = set[static_cast<std::size_t>(a)];
            const Index caption_clip = set[static_cast<std::size_t>(b)];
            matrix.sim(a, b) = combo_similarity(
                tensor, video, caption_clip,
                assignments[static_cast<std::size_t>(caption_clip)].combination);
        }
    }
    return matrix;
}

MetricReport evaluate_assignments(const SimilarityTensor& tensor,
                                  const std::vector<PromptAssignment>& assignments,
                                  const std::vector<std::vector<Index>>& sets) {
    const Index n = tensor.n_clips();
    if (static_cast<Index>(assignments.size()) != n) {
        throw invalid_input("evaluate_assignments: exactly one assignment per clip required");
    }
    for (Index i = 0; i < n; ++i) {
        if (assignments[static_cast<std::size_t>(i)].clip_index != i) {
            throw invalid_input("evaluate_assignments: assignment " + std::to_string(i) +
                                " is not for clip " + std::to_string(i));
        }
    }
    std::unordered_set<Index> seen;
    for (const auto& set : sets) {
        if (set.empty()) throw invalid_input("evaluate_assignments: empty evaluation set");
        for (Index c : set) {
            if (c < 0 || c >= n || !seen.insert(c).second) {
                throw invalid_input("evaluate_assignments: sets must partition clips 0..N-1");
            }
        }
    }
    if (static_cast<Index>(seen.size()) != n) {
        throw invalid_input("evaluate_assignments: sets must cover every clip");
    }

    MetricReport report;
    for (const auto& set : sets) {
        const RetrievalMatrix matrix = build_retrieval_matrix(tensor, assignments, set);
        report.per_set.push_back(metrics_for_matrix(matrix.sim, matrix.sim));
    }
    report.overall = macro_average(report.per_set);
    report.overall.n_clips = n;
    return report;
}

MetricReport chance_metrics(const std::vector<Index>& set_sizes, Index trials, std::uint64_t seed) {
    if (set_sizes.empty() || trials < 1) {
        throw invalid_input("chance_metrics: need at least one set size and one trial");
    }
    for (Index n : set_sizes) {
        if (n < 1) throw invalid_input("chance_metrics: set sizes must be >= 1");
    }
    Rng rng(sub_seed(seed, "chance"));
    SetMetrics total;
    std::vector<SetMetrics> per_set;
    Matd t2v, v2t;
    for (Index trial = 0; trial < trials; ++trial) {
        per_set.clear();
        for (Index n : set_sizes) {
            t2v.resize(n, n);
            v2t.resize(n, n);
            for (Index i = 0; i < n; ++i) {
                for (Index j = 0; j < n; ++j) {
                    t2v(i, j) = rng.uniform01();
                    v2t(i, j) = rng.uniform01();
                }
            }
            per_set.push_back(metrics_for_matrix(t2v, v2t));
        }
        const SetMetrics trial_avg = macro_average(per_set);
        total.t2v_r1 += trial_avg.t2v_r1;
        total.t2v_r2 += trial_avg.t2v_r2;
        total.t2v_r3 += trial_avg.t2v_r3;
        total.v2t_r1 += trial_avg.v2t_r1;
        total.v2t_r2 += trial_avg.v2t_r2;
        total.v2t_r3 += trial_avg.v2t_r3;
        total.avg_r1 += trial_avg.avg_r1;
        total.cycle1 += trial_avg.cycle1;
    }
    const double inv = 1.0 / static_cast<double>(trials);
    MetricReport report;
    report.overall.n_clips = 0;
    for (Index n : set_sizes) report.overall.n_clips += n;
    report.overall.t2v_r1 = total.t2v_r1 * inv;
    report.overall.t2v_r2 = total.t2v_r2 * inv;
    report.overall.t2v_r3 = total.t2v_r3 * inv;
    report.overall.v2t_r1 = total.v2t_r1 * inv;
    report.overall.v2t_r2 = total.v2t_r2 * inv;
    report.overall.v2t_r3 = total.v2t_r3 * inv;
    report.overall.avg_r1 = total.avg_r1 * inv;
    report.overall.cycle1 = total.cycle1 * inv;
    return report;
}

}  // namespace cdp

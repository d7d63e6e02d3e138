#include "cdp/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace cdp {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

PromptCombination::PromptCombination(std::vector<ComboElement> elements)
    : elements_(std::move(elements)) {
    if (elements_.empty()) {
        throw invalid_combination("PromptCombination: at least one element required");
    }
    std::sort(elements_.begin(), elements_.end());
    for (std::size_t i = 1; i < elements_.size(); ++i) {
        if (elements_[i] == elements_[i - 1]) {
            throw invalid_combination("PromptCombination: duplicate (prompt, advance) element");
        }
    }
    for (const auto& e : elements_) {
        if (e.prompt < 0 || e.advance < 0) {
            throw invalid_combination("PromptCombination: negative prompt or advance index");
        }
    }
}

Index PromptCombination::max_advance() const {
    return elements_.empty() ? 0 : elements_.back().advance;
}

std::vector<PromptCombination> enumerate_combinations(Index n_prompts, Index alpha, Index tau) {
    if (n_prompts < 1) {
        throw invalid_input("enumerate_combinations: n_prompts must be >= 1");
    }
    if (alpha < 1 || tau < 0) {
        throw invalid_input("enumerate_combinations: alpha must be >= 1 and tau >= 0");
    }
    // Element index e = t * n_prompts + k enumerates the grid in (t, k) order.
    const Index n_elems = n_prompts * (tau + 1);
    std::vector<PromptCombination> out;
    std::vector<Index> pick;
    const Index max_size = std::min(alpha, n_elems);
    for (Index m = 1; m <= max_size; ++m) {
        pick.assign(static_cast<std::size_t>(m), 0);
        for (Index i = 0; i < m; ++i) pick[static_cast<std::size_t>(i)] = i;
        while (true) {
            std::vector<ComboElement> elems;
            elems.reserve(static_cast<std::size_t>(m));
            for (Index e : pick) {
                elems.push_back({e % n_prompts, e / n_prompts});
            }
            out.emplace_back(std::move(elems));
            // next lexicographic m-combination of {0..n_elems-1}
            Index pos = m - 1;
            while (pos >= 0 && pick[static_cast<std::size_t>(pos)] == n_elems - m + pos) --pos;
            if (pos < 0) break;
            ++pick[static_cast<std::size_t>(pos)];
            for (Index i = pos + 1; i < m; ++i) {
                pick[static_cast<std::size_t>(i)] = pick[static_cast<std::size_t>(i - 1)] + 1;
            }
        }
    }
    return out;
}

namespace {

void check_combo_bounds(const SimilarityTensor& tensor, const PromptCombination& combo) {
    for (const auto& e : combo.elements()) {
        if (e.prompt >= tensor.n_prompts() || e.advance >= tensor.n_advances()) {
            throw invalid_combination("combination element (k=" + std::to_string(e.prompt) +
                                      ", t=" + std::to_string(e.advance) +
                                      ") outside tensor bounds");
        }
    }
}

double element_sum(const SimilarityTensor& tensor, Index i, Index j,
                   const PromptCombination& combo) {
    double sum = 0.0;
    for (const auto& e : combo.elements()) {
        sum += static_cast<double>(tensor(i, j, e.prompt, e.advance));
    }
    return sum;
}

}  // namespace

double combo_similarity(const SimilarityTensor& tensor, Index i, Index j,
                        const PromptCombination& combo) {
    if (combo.empty()) {
        throw invalid_combination("combo_similarity: empty combination");
    }
    if (i < 0 || i >= tensor.n_clips() || j < 0 || j >= tensor.n_clips()) {
        throw invalid_combination("combo_similarity: clip index outside tensor bounds");
    }
    check_combo_bounds(tensor, combo);
    return element_sum(tensor, i, j, combo) / static_cast<double>(combo.size());
}

double margin(const SimilarityTensor& tensor, Index i, const PromptCombination& combo) {
    const Index n = tensor.n_clips();
    if (n < 2) {
        throw undefined_margin("margin requires at least 2 clips; no competitor exists");
    }
    if (combo.empty()) {
        throw invalid_combination("margin: empty combination");
    }
    if (i < 0 || i >= n) {
        throw invalid_combination("margin: clip index outside tensor bounds");
    }
    check_combo_bounds(tensor, combo);
    const double m = static_cast<double>(combo.size());
    const double self_mean = element_sum(tensor, i, i, combo) / m;
    double cross_sum = kNegInf;
    for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        cross_sum = std::max(cross_sum, element_sum(tensor, i, j, combo));
        cross_sum = std::max(cross_sum, element_sum(tensor, j, i, combo));
    }
    return self_mean - cross_sum / m;
}

namespace {

/// Max over competitors j != self of max(row(j), col(j)).
double masked_cross_max(const Eigen::Array<double, 1, Eigen::Dynamic>& row,
                        const Eigen::Array<double, 1, Eigen::Dynamic>& col, Index self) {
    const Index n = row.size();
    double best = kNegInf;
    if (self > 0) {
        best = row.head(self).max(col.head(self)).maxCoeff();
    }
    if (self + 1 < n) {
        best = std::max(best, row.tail(n - self - 1).max(col.tail(n - self - 1)).maxCoeff());
    }
    return best;
}

struct BestCombo {
    double margin = kNegInf;
    std::vector<Index> elems;  // ascending element indices (e = t * P + k)
    bool valid = false;
};

/// Tie order among equal margins: fewer elements, then smaller max advance,
/// then lexicographically smaller element sequence.
bool preferred_order(const std::vector<Index>& a, const std::vector<Index>& b, Index n_prompts) {
    if (a.size() != b.size()) return a.size() < b.size();
    const Index max_ta = a.back() / n_prompts;
    const Index max_tb = b.back() / n_prompts;
    if (max_ta != max_tb) return max_ta < max_tb;
    return a < b;
}

/// Depth-first enumeration of all combinations of up to alpha elements for a
/// single clip, carrying running per-competitor sums so each combination
/// costs O(n_clips) to score.
class ClipSearcher {
public:
    ClipSearcher(const SimilarityTensor& tensor, Index clip, Index alpha)
        : clip_(clip),
          n_(tensor.n_clips()),
          n_prompts_(tensor.n_prompts()),
          alpha_(alpha) {
        const Index n_elems = n_prompts_ * tensor.n_advances();
        row_blk_.resize(n_elems, n_);
        col_blk_.resize(n_elems, n_);
        for (Index e = 0; e < n_elems; ++e) {
            const Index t = e / n_prompts_;
            const Index k = e % n_prompts_;
            for (Index j = 0; j < n_; ++j) {
                row_blk_(e, j) = static_cast<double>(tensor(clip_, j, k, t));
                col_blk_(e, j) = static_cast<double>(tensor(j, clip_, k, t));
            }
        }
        sum_row_.resize(static_cast<std::size_t>(alpha_) + 1);
        sum_col_.resize(static_cast<std::size_t>(alpha_) + 1);
        for (auto& v : sum_row_) v = Eigen::Array<double, 1, Eigen::Dynamic>::Zero(n_);
        for (auto& v : sum_col_) v = Eigen::Array<double, 1, Eigen::Dynamic>::Zero(n_);
        stack_.reserve(static_cast<std::size_t>(alpha_));
    }

    /// Best combination drawn from elements with advance <= tau.
    BestCombo best_at_budget(Index tau) {
        best_ = BestCombo{};
        budget_elems_ = n_prompts_ * (tau + 1);
        stack_.clear();
        dfs(0, 0);
        return best_;
    }

    std::uint64_t evaluated() const { return evaluated_; }

private:
    void dfs(Index start, Index depth) {
        for (Index e = start; e < budget_elems_; ++e) {
            sum_row_[depth + 1] = sum_row_[depth] + row_blk_.row(e).array();
            sum_col_[depth + 1] = sum_col_[depth] + col_blk_.row(e).array();
            stack_.push_back(e);
            ++evaluated_;

            const double m = static_cast<double>(depth + 1);
            const double self_mean = sum_row_[depth + 1](clip_) / m;
            const double cross = masked_cross_max(sum_row_[depth + 1], sum_col_[depth + 1], clip_);
            const double mg = self_mean - cross / m;
            if (!best_.valid || mg > best_.margin ||
                (mg == best_.margin && preferred_order(stack_, best_.elems, n_prompts_))) {
                best_.margin = mg;
                best_.elems = stack_;
                best_.valid = true;
            }

            if (depth + 1 < alpha_) {
                dfs(e + 1, depth + 1);
            }
            stack_.pop_back();
        }
    }

    Index clip_;
    Index n_;
    Index n_prompts_;
    Index alpha_;
    Index budget_elems_ = 0;
    RowMatd row_blk_, col_blk_;
    std::vector<Eigen::Array<double, 1, Eigen::Dynamic>> sum_row_, sum_col_;
    std::vector<Index> stack_;
    BestCombo best_;
    std::uint64_t evaluated_ = 0;
};

PromptCombination combo_from_elems(const std::vector<Index>& elems, Index n_prompts) {
    std::vector<ComboElement> out;
    out.reserve(elems.size());
    for (Index e : elems) {
        out.push_back({e % n_prompts, e / n_prompts});
    }
    return PromptCombination(std::move(out));
}

std::string default_clip_id(Index i) { return "clip" + std::to_string(i); }

void validate_search_inputs(const SimilarityTensor& tensor, const SearchConfig& config,
                            const std::vector<std::string>& clip_ids) {
    if (tensor.n_clips() < 2) {
        throw undefined_margin("select_prompts requires at least 2 clips");
    }
    if (config.alpha < 1) {
        throw invalid_input("SearchConfig: alpha must be >= 1");
    }
    if (config.tau_max < 0 || config.tau_max >= tensor.n_advances()) {
        throw invalid_input("SearchConfig: tau_max must lie within the tensor's advances (0.." +
                            std::to_string(tensor.n_advances() - 1) + ")");
    }
    if (!std::isfinite(config.lambda)) {
        throw invalid_input("SearchConfig: lambda must be finite");
    }
    if (!clip_ids.empty() && static_cast<Index>(clip_ids.size()) != tensor.n_clips()) {
        throw invalid_input("select_prompts: clip_ids count does not match tensor n_clips");
    }
}

PromptAssignment make_assignment(const std::vector<std::string>& clip_ids, Index i,
                                 const BestCombo& best, Index n_prompts, double lambda) {
    PromptAssignment a;
    a.clip_id = clip_ids.empty() ? default_clip_id(i) : clip_ids[static_cast<std::size_t>(i)];
    a.clip_index = i;
    a.combination = combo_from_elems(best.elems, n_prompts);
    a.margin = best.margin;
    a.unique = best.margin > lambda;
    a.advance_used = a.combination.max_advance();
    return a;
}

}  // namespace

SearchResult select_prompts(const SimilarityTensor& tensor, const SearchConfig& config,
                            const std::vector<std::string>& clip_ids) {
    validate_search_inputs(tensor, config, clip_ids);
    const auto start = std::chrono::steady_clock::now();

    const Index n = tensor.n_clips();
    SearchResult result;
    result.assignments.reserve(static_cast<std::size_t>(n));

    if (config.mode == AdvancementMode::per_clip) {
        for (Index i = 0; i < n; ++i) {
            ClipSearcher searcher(tensor, i, config.alpha);
            BestCombo best;
            for (Index tau = 0; tau <= config.tau_max; ++tau) {
                best = searcher.best_at_budget(tau);
                if (best.margin > config.lambda) break;
            }
            result.assignments.push_back(
                make_assignment(clip_ids, i, best, tensor.n_prompts(), config.lambda));
            result.stats.combos_evaluated += searcher.evaluated();
        }
    } else {
        // Uniform advancement: all clips share one budget; stop at the first
        // budget where every clip clears lambda, else at tau_max.
        std::vector<std::vector<BestCombo>> per_budget(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) {
            ClipSearcher searcher(tensor, i, config.alpha);
            for (Index tau = 0; tau <= config.tau_max; ++tau) {
                per_budget[static_cast<std::size_t>(i)].push_back(searcher.best_at_budget(tau));
            }
            result.stats.combos_evaluated += searcher.evaluated();
        }
        Index chosen_budget = config.tau_max;
        for (Index tau = 0; tau <= config.tau_max; ++tau) {
            bool all_unique = true;
            for (Index i = 0; i < n; ++i) {
                if (!(per_budget[static_cast<std::size_t>(i)][static_cast<std::size_t>(tau)].margin >
                      config.lambda)) {
                    all_unique = false;
                    break;
                }
            }
            if (all_unique) {
                chosen_budget = tau;
                break;
            }
        }
        for (Index i = 0; i < n; ++i) {
            const auto& best =
                per_budget[static_cast<std::size_t>(i)][static_cast<std::size_t>(chosen_budget)];
            result.assignments.push_back(
                make_assignment(clip_ids, i, best, tensor.n_prompts(), config.lambda));
        }
    }

    result.stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::vector<std::string> element_captions(const PromptAssignment& assignment,
                                          const SimilarityOracle& oracle) {
    std::vector<std::string> captions;
    captions.reserve(assignment.combination.elements().size());
    for (const auto& e : assignment.combination.elements()) {
        auto text = oracle.caption(assignment.clip_index, e.prompt, e.advance);
        if (!text) {
            throw caption_unavailable("no caption text for clip " +
                                      std::to_string(assignment.clip_index) + " prompt " +
                                      std::to_string(e.prompt) + " advance " +
                                      std::to_string(e.advance));
        }
        captions.push_back(std::move(*text));
    }
    return captions;
}

std::string assemble_caption(const PromptAssignment& assignment, const SimilarityOracle& oracle) {
    const auto captions = element_captions(assignment, oracle);
    const auto& elems = assignment.combination.elements();
    std::string out;
    for (std::size_t i = 0; i < captions.size(); ++i) {
        if (i == 0) {
            out = captions[0];
        } else if (elems[i].advance == elems[i - 1].advance) {
            out += ", " + captions[i];
        } else {
            out += " then " + captions[i];
        }
    }
    return out;
}

bool is_unique_combination(const SimilarityTensor& tensor, Index i,
                           const PromptCombination& combo) {
    const Index n = tensor.n_clips();
    const double self = combo_similarity(tensor, i, i, combo);
    double best_cross = kNegInf;
    for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        best_cross = std::max(best_cross, combo_similarity(tensor, i, j, combo));
        best_cross = std::max(best_cross, combo_similarity(tensor, j, i, combo));
    }
    return self > best_cross;
}

std::vector<bool> verify_uniqueness(const SimilarityTensor& tensor,
                                    const std::vector<PromptAssignment>& assignments) {
    if (static_cast<Index>(assignments.size()) != tensor.n_clips()) {
        throw invalid_input("verify_uniqueness: exactly one assignment per clip required");
    }
    std::vector<bool> out;
    out.reserve(assignments.size());
    for (const auto& a : assignments) {
        out.push_back(is_unique_combination(tensor, a.clip_index, a.combination));
    }
    return out;
}

}  // namespace cdp

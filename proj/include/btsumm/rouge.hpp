#pragma once

#include <span>
#include <string>
#include <vector>

namespace btsumm {

struct RougeTriple {
    double p = 0.0;
    double r = 0.0;
    double f = 0.0;
};

struct RougeScore {
    RougeTriple r1, r2, rl;
};

// Clipped n-gram overlap, n in {1, 2}. Empty sides score 0.
RougeTriple rouge_n(std::span<const int> candidate, std::span<const int> reference, int n);

// LCS-based ROUGE with beta = 1 (harmonic mean of p and r).
RougeTriple rouge_l(std::span<const int> candidate, std::span<const int> reference);

RougeScore rouge_all(std::span<const int> candidate, std::span<const int> reference);

// String-token convenience: interns tokens into ids, then scores.
RougeScore rouge_all_tokens(const std::vector<std::string>& candidate,
                            const std::vector<std::string>& reference);

// First min(k, len) tokens of the article.
std::vector<int> lead_k(std::span<const int> fulltext, int k = 8);

// Mean of per-pair scores, all nine components averaged arithmetically.
RougeScore average_scores(const std::vector<RougeScore>& scores);

}  // namespace btsumm

#pragma once

// Brute-force reference implementations, deliberately independent of the
// library's ROUGE code: plain vector scans, no hash maps, exhaustive
// subsequence search for the LCS.

#include <algorithm>
#include <vector>

namespace btest::oracle {

struct Prf {
    double p = 0, r = 0, f = 0;
};

inline int count_ngram_occurrences(const std::vector<int>& seq, const std::vector<int>& gram) {
    if (seq.size() < gram.size() || gram.empty()) return 0;
    int count = 0;
    for (size_t i = 0; i + gram.size() <= seq.size(); ++i) {
        bool match = true;
        for (size_t j = 0; j < gram.size(); ++j)
            if (seq[i + j] != gram[j]) {
                match = false;
                break;
            }
        if (match) ++count;
    }
    return count;
}

inline Prf bf_rouge_n(const std::vector<int>& cand, const std::vector<int>& ref, int n) {
    Prf out;
    int cand_total = static_cast<int>(cand.size()) - n + 1;
    int ref_total = static_cast<int>(ref.size()) - n + 1;
    if (cand_total < 0) cand_total = 0;
    if (ref_total < 0) ref_total = 0;
    // clipped matches: sum over distinct candidate n-grams of
    // min(count in cand, count in ref); distinctness by first occurrence
    int matches = 0;
    for (int i = 0; i + n <= static_cast<int>(cand.size()); ++i) {
        std::vector<int> gram(cand.begin() + i, cand.begin() + i + n);
        bool seen_before = false;
        for (int j = 0; j < i; ++j) {
            bool same = true;
            for (int k = 0; k < n; ++k)
                if (cand[static_cast<size_t>(j + k)] != gram[static_cast<size_t>(k)]) {
                    same = false;
                    break;
                }
            if (same && j + n <= static_cast<int>(cand.size())) {
                seen_before = true;
                break;
            }
        }
        if (seen_before) continue;
        int in_cand = count_ngram_occurrences(cand, gram);
        int in_ref = count_ngram_occurrences(ref, gram);
        matches += std::min(in_cand, in_ref);
    }
    if (cand_total > 0) out.p = static_cast<double>(matches) / cand_total;
    if (ref_total > 0) out.r = static_cast<double>(matches) / ref_total;
    out.f = (out.p + out.r) > 0 ? 2 * out.p * out.r / (out.p + out.r) : 0.0;
    return out;
}

inline bool is_subsequence(const std::vector<int>& sub, const std::vector<int>& seq) {
    size_t i = 0;
    for (size_t j = 0; j < seq.size() && i < sub.size(); ++j)
        if (seq[j] == sub[i]) ++i;
    return i == sub.size();
}

// Exhaustive LCS over all 2^|cand| candidate subsequences (lengths <= ~16).
inline int bf_lcs(const std::vector<int>& cand, const std::vector<int>& ref) {
    int best = 0;
    const int n = static_cast<int>(cand.size());
    for (uint32_t mask = 0; mask < (1u << n); ++mask) {
        std::vector<int> sub;
        for (int i = 0; i < n; ++i)
            if (mask & (1u << i)) sub.push_back(cand[static_cast<size_t>(i)]);
        if (static_cast<int>(sub.size()) <= best) continue;
        if (is_subsequence(sub, ref)) best = static_cast<int>(sub.size());
    }
    return best;
}

inline Prf bf_rouge_l(const std::vector<int>& cand, const std::vector<int>& ref) {
    Prf out;
    if (cand.empty() || ref.empty()) return out;
    int lcs = bf_lcs(cand, ref);
    out.p = static_cast<double>(lcs) / static_cast<double>(cand.size());
    out.r = static_cast<double>(lcs) / static_cast<double>(ref.size());
    out.f = (out.p + out.r) > 0 ? 2 * out.p * out.r / (out.p + out.r) : 0.0;
    return out;
}

}  // namespace btest::oracle

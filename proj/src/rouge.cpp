#include "btsumm/rouge.hpp"

#include <algorithm>
#include <cstdint>
#include <unordered_map>

namespace btsumm {

namespace {

double f_beta1(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

RougeTriple rouge_n(std::span<const int> candidate, std::span<const int> reference, int n) {
    RougeTriple out;
    if (n != 1 && n != 2) return out;
    auto ngrams = [n](std::span<const int> seq) {
        std::unordered_map<uint64_t, int> counts;
        if (static_cast<int>(seq.size()) >= n) {
            for (size_t i = 0; i + static_cast<size_t>(n) <= seq.size(); ++i) {
                uint64_t key = static_cast<uint32_t>(seq[i]);
                if (n == 2) key = (key << 32) | static_cast<uint32_t>(seq[i + 1]);
                counts[key]++;
            }
        }
        return counts;
    };
    auto cand = ngrams(candidate);
    auto ref = ngrams(reference);
    int64_t cand_total = 0, ref_total = 0, matches = 0;
    for (auto& [k, c] : cand) cand_total += c;
    for (auto& [k, c] : ref) ref_total += c;
    for (auto& [k, c] : cand) {
        auto it = ref.find(k);
        if (it != ref.end()) matches += std::min(c, it->second);
    }
    if (cand_total > 0) out.p = static_cast<double>(matches) / static_cast<double>(cand_total);
    if (ref_total > 0) out.r = static_cast<double>(matches) / static_cast<double>(ref_total);
    out.f = f_beta1(out.p, out.r);
    return out;
}

RougeTriple rouge_l(std::span<const int> candidate, std::span<const int> reference) {
    RougeTriple out;
    const size_t nc = candidate.size(), nr = reference.size();
    if (nc == 0 || nr == 0) return out;
    // rolling-row LCS
    std::vector<int> prev(nr + 1, 0), cur(nr + 1, 0);
    for (size_t i = 1; i <= nc; ++i) {
        for (size_t j = 1; j <= nr; ++j) {
            if (candidate[i - 1] == reference[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    int lcs = prev[nr];
    out.p = static_cast<double>(lcs) / static_cast<double>(nc);
    out.r = static_cast<double>(lcs) / static_cast<double>(nr);
    out.f = f_beta1(out.p, out.r);
    return out;
}

RougeScore rouge_all(std::span<const int> candidate, std::span<const int> reference) {
    RougeScore s;
    s.r1 = rouge_n(candidate, reference, 1);
    s.r2 = rouge_n(candidate, reference, 2);
    s.rl = rouge_l(candidate, reference);
    return s;
}

RougeScore rouge_all_tokens(const std::vector<std::string>& candidate,
                            const std::vector<std::string>& reference) {
    std::unordered_map<std::string, int> intern;
    auto to_ids = [&intern](const std::vector<std::string>& toks) {
        std::vector<int> ids;
        ids.reserve(toks.size());
        for (const auto& t : toks) {
            auto it = intern.find(t);
            if (it == intern.end())
                it = intern.emplace(t, static_cast<int>(intern.size())).first;
            ids.push_back(it->second);
        }
        return ids;
    };
    auto c = to_ids(candidate);
    auto r = to_ids(reference);
    return rouge_all(c, r);
}

std::vector<int> lead_k(std::span<const int> fulltext, int k) {
    size_t n = std::min(fulltext.size(), static_cast<size_t>(std::max(k, 0)));
    return std::vector<int>(fulltext.begin(), fulltext.begin() + static_cast<ptrdiff_t>(n));
}

RougeScore average_scores(const std::vector<RougeScore>& scores) {
    RougeScore avg;
    if (scores.empty()) return avg;
    auto acc = [](RougeTriple& a, const RougeTriple& b) {
        a.p += b.p;
        a.r += b.r;
        a.f += b.f;
    };
    for (const auto& s : scores) {
        acc(avg.r1, s.r1);
        acc(avg.r2, s.r2);
        acc(avg.rl, s.rl);
    }
    double inv = 1.0 / static_cast<double>(scores.size());
    for (RougeTriple* t : {&avg.r1, &avg.r2, &avg.rl}) {
        t->p *= inv;
        t->r *= inv;
        t->f *= inv;
    }
    return avg;
}

}  // namespace btsumm

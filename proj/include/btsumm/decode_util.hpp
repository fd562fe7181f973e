#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

namespace btsumm::decode {

// log-softmax over a logits vector with some ids masked out entirely.
template <class T>
std::vector<double> log_softmax_masked(const std::vector<T>& logits,
                                       std::initializer_list<int> masked) {
    std::vector<double> out(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]);
    for (int id : masked) out[static_cast<size_t>(id)] = -1e30;
    double mx = *std::max_element(out.begin(), out.end());
    double sum = 0;
    for (double v : out) sum += std::exp(v - mx);
    double lse = mx + std::log(sum);
    for (double& v : out) v -= lse;
    return out;
}

// k largest entries ordered by (value desc, id asc); deterministic ties.
inline std::vector<std::pair<int, double>> topk(const std::vector<double>& scores, int k) {
    std::vector<int> idx(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) idx[i] = static_cast<int>(i);
    int kk = std::min<int>(k, static_cast<int>(scores.size()));
    std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(), [&scores](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        return a < b;
    });
    std::vector<std::pair<int, double>> out;
    out.reserve(static_cast<size_t>(kk));
    for (int i = 0; i < kk; ++i) out.emplace_back(idx[static_cast<size_t>(i)], scores[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
    return out;
}

inline double length_normalized(double logprob, size_t length_with_eos, double alpha) {
    double len = static_cast<double>(std::max<size_t>(length_with_eos, 1));
    return logprob / std::pow(len, alpha);
}

struct Finished {
    std::vector<int> tokens;
    double score;
};

// Highest normalized score; ties prefer lexicographically smaller sequences.
inline std::vector<int> best_finished(const std::vector<Finished>& done) {
    if (done.empty()) return {};
    const Finished* best = &done[0];
    for (const auto& f : done) {
        if (f.score > best->score ||
            (f.score == best->score && f.tokens < best->tokens))
            best = &f;
    }
    return best->tokens;
}

// Renormalized sampling over the k highest-probability tokens.
// rng_u01 is a uniform [0,1) draw.
inline int sample_topk(const std::vector<double>& logprobs, int k, double u) {
    auto top = topk(logprobs, k);
    double sum = 0;
    std::vector<double> probs(top.size());
    for (size_t i = 0; i < top.size(); ++i) {
        probs[i] = std::exp(top[i].second);
        sum += probs[i];
    }
    double cum = 0;
    double target = u * sum;
    for (size_t i = 0; i < top.size(); ++i) {
        cum += probs[i];
        if (target < cum) return top[i].first;
    }
    return top.back().first;
}

}  // namespace btsumm::decode

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "btsumm/corpus.hpp"

namespace btsumm {

struct EmbeddingMatrix {
    int dim = 0;
    int vocab_size = 0;
    std::vector<float> data;  // vocab_size x dim, row-major

    EmbeddingMatrix() = default;
    EmbeddingMatrix(int vocab, int d) : dim(d), vocab_size(vocab) {
        data.assign(static_cast<size_t>(vocab) * static_cast<size_t>(d), 0.0f);
    }
    float* row(int i) { return data.data() + static_cast<size_t>(i) * static_cast<size_t>(dim); }
    const float* row(int i) const {
        return data.data() + static_cast<size_t>(i) * static_cast<size_t>(dim);
    }
    bool all_finite() const;
};

struct SkipgramConfig {
    int dim = 256;
    int window = 5;
    int negatives = 5;
    int epochs = 5;
    float lr = 0.025f;
    double sample = 0.0;  // frequent-word subsampling threshold; 0 disables
    uint64_t seed = 1;
    int threads = 1;          // > 1 only takes effect when deterministic=false
    bool deterministic = true;
    bool verbose = false;
};

struct SkipgramStats {
    std::vector<double> epoch_loss;  // mean negative-sampling loss per epoch
    int64_t pairs_trained = 0;
};

// Skipgram with negative sampling over the corpus (an EOS token is appended
// to every sequence, so EOS gets a trained vector). Deterministic mode
// processes sequences in corpus order with a single writer.
EmbeddingMatrix train_skipgram(const Corpus& corpus, const Vocabulary& vocab,
                               const SkipgramConfig& cfg, SkipgramStats* stats = nullptr);

// One negative-sampling triple: loss = -log s(u_pos . v) - log s(-u_neg . v).
// Shared with the trainer's update rule; the gradient-check suite drives the
// double instantiation.
template <class T>
T skipgram_triple_loss(const T* center, const T* ctx_pos, const T* ctx_neg, int dim) {
    T dp = 0, dn = 0;
    for (int i = 0; i < dim; ++i) {
        dp += center[i] * ctx_pos[i];
        dn += center[i] * ctx_neg[i];
    }
    auto logsig = [](T x) { return -std::log(T(1) + std::exp(-x)); };
    return -logsig(dp) - logsig(-dn);
}

template <class T>
void skipgram_triple_grads(const T* center, const T* ctx_pos, const T* ctx_neg, int dim,
                           T* g_center, T* g_pos, T* g_neg) {
    T dp = 0, dn = 0;
    for (int i = 0; i < dim; ++i) {
        dp += center[i] * ctx_pos[i];
        dn += center[i] * ctx_neg[i];
    }
    T sp = T(1) / (T(1) + std::exp(-dp));  // s(u_pos . v)
    T sn = T(1) / (T(1) + std::exp(-dn));
    for (int i = 0; i < dim; ++i) {
        g_pos[i] = (sp - T(1)) * center[i];
        g_neg[i] = sn * center[i];
        g_center[i] = (sp - T(1)) * ctx_pos[i] + sn * ctx_neg[i];
    }
}

struct EmbeddingLoadResult {
    EmbeddingMatrix matrix;
    int skipped_unknown = 0;  // file words absent from the vocabulary
    int missing_vocab = 0;    // vocabulary words absent from the file
};

// Text vector format: first line "<count> <dim>", then "<word> <v1> ...".
void save_embeddings(const EmbeddingMatrix& emb, const Vocabulary& vocab,
                     const std::string& path);
EmbeddingLoadResult load_embeddings(const std::string& path, const Vocabulary& vocab);

}  // namespace btsumm

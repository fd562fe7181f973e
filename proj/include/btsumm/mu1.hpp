#pragma once

#include <span>
#include <string>
#include <vector>

#include "btsumm/embeddings.hpp"
#include "btsumm/moments.hpp"
#include "btsumm/nn/optim.hpp"
#include "btsumm/nn/tape.hpp"

namespace btsumm {

struct Mu1HParams {
    int enc_dim = 256;
    double eta = 0.3;   // output-probability threshold
    int max_len = 12;   // N
};

// First-order moments model: the DBAE-style BoW encoder followed by a linear
// map to the summary vocabulary and a sigmoid; words absent from the input
// get -1e6 added to their log-score.
template <class T>
struct Mu1Model {
    Mu1HParams hp;
    int shared_vocab = 0;
    int summary_vocab = 0;
    int emb_dim = 0;

    nn::Tensor<T> enc_table;  // frozen shared embeddings
    nn::Param<T> enc_w, enc_b, bn_gamma, bn_beta;
    nn::BnState<T> bn;
    nn::Param<T> head_w, head_b;  // enc_dim -> V_summary

    static Mu1Model<T> build(const EmbeddingMatrix& shared_emb, int summary_vocab,
                             const Mu1HParams& hp, uint64_t seed) {
        Mu1Model<T> m;
        m.hp = hp;
        m.shared_vocab = shared_emb.vocab_size;
        m.summary_vocab = summary_vocab;
        m.emb_dim = shared_emb.dim;
        m.enc_table = nn::Tensor<T>(std::vector<int>{m.shared_vocab, m.emb_dim});
        for (size_t i = 0; i < shared_emb.data.size(); ++i)
            m.enc_table.v[i] = static_cast<T>(shared_emb.data[i]);
        m.enc_w = nn::Param<T>("enc.w", {hp.enc_dim, m.emb_dim});
        m.enc_b = nn::Param<T>("enc.b", {hp.enc_dim});
        m.bn_gamma = nn::Param<T>("enc.bn.gamma", {hp.enc_dim});
        m.bn_beta = nn::Param<T>("enc.bn.beta", {hp.enc_dim});
        for (auto& x : m.bn_gamma.value.v) x = T(1);
        m.bn = nn::BnState<T>(hp.enc_dim);
        m.head_w = nn::Param<T>("head.w", {summary_vocab, hp.enc_dim});
        m.head_b = nn::Param<T>("head.b", {summary_vocab});
        auto rng = make_rng(seed, 0x3a31);
        m.enc_w.init_uniform(rng, m.emb_dim);
        m.head_w.init_uniform(rng, hp.enc_dim);
        return m;
    }

    std::vector<nn::Param<T>*> params() {
        return {&enc_w, &enc_b, &bn_gamma, &bn_beta, &head_w, &head_b};
    }

    std::vector<std::pair<std::string, nn::Tensor<T>*>> state_tensors() {
        std::vector<std::pair<std::string, nn::Tensor<T>*>> ts;
        for (auto* p : params()) ts.emplace_back(p->name, &p->value);
        ts.emplace_back("enc.bn.running_mean", &bn.running_mean);
        ts.emplace_back("enc.bn.running_var", &bn.running_var);
        return ts;
    }

    // Sigmoid presence probabilities [B, V_summary] for a batch of full-text
    // sequences (shared-vocab ids). Masks non-present words at -1e6.
    nn::Node<T>* forward_probs(nn::Tape<T>& tape,
                               const std::vector<const std::vector<int>*>& batch,
                               std::span<const int> shared_to_summary, bool training) {
        std::vector<nn::Node<T>*> pooled;
        pooled.reserve(batch.size());
        for (const auto* seq : batch) {
            if (seq->empty()) {
                pooled.push_back(tape.input(nn::Tensor<T>(std::vector<int>{emb_dim})));
                continue;
            }
            pooled.push_back(tape.mean_pool(tape.rows_const(enc_table, *seq)));
        }
        auto* enc = tape.batch_norm(tape.linear(tape.stack_rows(pooled), enc_w, &enc_b),
                                    bn_gamma, bn_beta, bn, training);
        auto* logits = tape.linear(enc, head_w, &head_b);
        nn::Tensor<T> mask(std::vector<int>{static_cast<int>(batch.size()), summary_vocab});
        for (auto& v : mask.v) v = T(-1e6);
        for (size_t b = 0; b < batch.size(); ++b) {
            for (int sid : *batch[b]) {
                int vs = shared_to_summary[static_cast<size_t>(sid)];
                if (vs < Vocabulary::kNumSpecials) continue;
                mask.at(static_cast<int>(b), vs) = T(0);
            }
        }
        return tape.sigmoid(tape.add_const(logits, mask));
    }
};

struct Mu1TrainConfig {
    int epochs = 20;
    int batch = 32;
    uint64_t seed = 1;
    nn::AdamConfig adam;
    bool verbose = false;
    std::string log_tag = "mu1";
};

struct Mu1TrainStats {
    std::vector<double> epoch_loss;
};

// Batched first-order moment matching (see summary_weights for the corpus
// moments). Per batch: target_v = clamp(batch_mu_f / mu_f * mu_s, 0, 1);
// loss = sum over summary words with mu_f > 0 of BCE(batch mean prob, target).
template <class T>
Mu1TrainStats moments_train(Mu1Model<T>& model, const std::vector<std::vector<int>>& fulltexts,
                            std::span<const int> shared_to_summary,
                            std::span<const int> summary_to_shared, const MomentStats& stats,
                            const Mu1TrainConfig& cfg);

// Loss of one batch without updating; the gradient-check suite reuses it.
template <class T>
nn::Node<T>* moments_batch_loss(Mu1Model<T>& model, nn::Tape<T>& tape,
                                const std::vector<const std::vector<int>*>& batch,
                                std::span<const int> shared_to_summary,
                                std::span<const int> summary_to_shared, const MomentStats& stats,
                                bool training);

// Emit input words (input order, deduplicated, first N) whose predicted
// presence probability exceeds eta. Output ids are summary-vocab ids.
template <class T>
std::vector<int> moments_extract(Mu1Model<T>& model, const std::vector<int>& fulltext_shared,
                                 std::span<const int> shared_to_summary);

// Corpus-level marginal output moments (inference mode), indexed by the
// summary vocabulary.
template <class T>
std::vector<double> moments_marginals(Mu1Model<T>& model,
                                      const std::vector<std::vector<int>>& fulltexts,
                                      std::span<const int> shared_to_summary, int batch = 64);

}  // namespace btsumm

#include "btsumm/mu1_impl.hpp"

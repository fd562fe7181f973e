#pragma once

#include <span>
#include <string>
#include <vector>

#include "btsumm/embeddings.hpp"
#include "btsumm/nn/checkpoint.hpp"
#include "btsumm/nn/optim.hpp"
#include "btsumm/nn/tape.hpp"

namespace btsumm {

// Noise model: per input token, delete with probability p/2 and,
// independently, insert a uniform summary-vocabulary word after it with
// probability p. insert_pool holds the candidate ids.
std::vector<int> dbae_noise(const std::vector<int>& seq, double p, uint64_t seed,
                            std::span<const int> insert_pool);

struct DbaeHParams {
    int enc_dim = 256;
    int hidden = 256;
    double noise_p = 0.2;
    double lambda_bias = 2.0;
    int beam = 5;
    int max_len = 15;
    double len_norm = 0.7;
};

// Denoising bag-of-words auto-encoder: frozen-embedding BoW encoder
// (mean-pool -> linear -> batch norm) and a 2-layer GRU decoder whose
// per-layer initial state is [encoder output || 0] projected back to the
// hidden size. Input ids live in the shared vocabulary, output ids in the
// summary vocabulary.
template <class T>
struct Dbae {
    DbaeHParams hp;
    int shared_vocab = 0;
    int summary_vocab = 0;
    int emb_dim = 0;

    nn::Tensor<T> enc_table;  // frozen shared embeddings [V_shared, e]
    nn::Tensor<T> dec_table;  // frozen summary-word rows  [V_summary, e]

    nn::Param<T> enc_w, enc_b, bn_gamma, bn_beta;
    nn::BnState<T> bn;
    nn::GruLayer<T> gru1, gru2;
    nn::Param<T> bridge1_w, bridge1_b, bridge2_w, bridge2_b;
    nn::Param<T> out_w, out_b;  // decoder feature -> embedding dim (tied output)
    nn::Param<T> out_bias;      // [V_summary]

    static Dbae<T> build(const EmbeddingMatrix& shared_emb, const std::vector<int>& summary_to_shared,
                         const DbaeHParams& hp, uint64_t seed) {
        Dbae<T> m;
        m.hp = hp;
        m.shared_vocab = shared_emb.vocab_size;
        m.summary_vocab = static_cast<int>(summary_to_shared.size());
        m.emb_dim = shared_emb.dim;
        const int e = m.emb_dim, enc = hp.enc_dim, h = hp.hidden;

        m.enc_table = nn::Tensor<T>(std::vector<int>{m.shared_vocab, e});
        for (size_t i = 0; i < shared_emb.data.size(); ++i)
            m.enc_table.v[i] = static_cast<T>(shared_emb.data[i]);
        m.dec_table = nn::Tensor<T>(std::vector<int>{m.summary_vocab, e});
        for (int vs = 0; vs < m.summary_vocab; ++vs) {
            int sid = summary_to_shared[static_cast<size_t>(vs)];
            const float* src = shared_emb.row(sid);
            for (int j = 0; j < e; ++j) m.dec_table.at(vs, j) = static_cast<T>(src[j]);
        }

        m.enc_w = nn::Param<T>("enc.w", {enc, e});
        m.enc_b = nn::Param<T>("enc.b", {enc});
        m.bn_gamma = nn::Param<T>("enc.bn.gamma", {enc});
        m.bn_beta = nn::Param<T>("enc.bn.beta", {enc});
        for (auto& x : m.bn_gamma.value.v) x = T(1);
        m.bn = nn::BnState<T>(enc);
        m.gru1 = nn::GruLayer<T>("dec.gru1", e, h);
        m.gru2 = nn::GruLayer<T>("dec.gru2", h, h);
        m.bridge1_w = nn::Param<T>("dec.bridge1.w", {h, enc + h});
        m.bridge1_b = nn::Param<T>("dec.bridge1.b", {h});
        m.bridge2_w = nn::Param<T>("dec.bridge2.w", {h, enc + h});
        m.bridge2_b = nn::Param<T>("dec.bridge2.b", {h});
        m.out_w = nn::Param<T>("dec.out.w", {e, h});
        m.out_b = nn::Param<T>("dec.out.b", {e});
        m.out_bias = nn::Param<T>("dec.out_bias", {m.summary_vocab});

        auto rng = make_rng(seed, 0xdbae);
        m.enc_w.init_uniform(rng, e);
        m.gru1.init(rng);
        m.gru2.init(rng);
        m.bridge1_w.init_uniform(rng, enc + h);
        m.bridge2_w.init_uniform(rng, enc + h);
        m.out_w.init_uniform(rng, h);
        return m;
    }

    std::vector<nn::Param<T>*> params() {
        std::vector<nn::Param<T>*> ps = {&enc_w,      &enc_b,      &bn_gamma,  &bn_beta,
                                         &bridge1_w,  &bridge1_b,  &bridge2_w, &bridge2_b,
                                         &out_w,      &out_b,      &out_bias};
        for (auto* p : gru1.params()) ps.push_back(p);
        for (auto* p : gru2.params()) ps.push_back(p);
        return ps;
    }

    std::vector<std::pair<std::string, nn::Tensor<T>*>> state_tensors() {
        std::vector<std::pair<std::string, nn::Tensor<T>*>> ts;
        for (auto* p : params()) ts.emplace_back(p->name, &p->value);
        ts.emplace_back("enc.bn.running_mean", &bn.running_mean);
        ts.emplace_back("enc.bn.running_var", &bn.running_var);
        return ts;
    }

    // Encoder body shared by training (batched, batch-stat BN) and inference.
    nn::Node<T>* encode_pooled(nn::Tape<T>& tape, nn::Node<T>* pooled_batch, bool training) {
        auto* lin = tape.linear(pooled_batch, enc_w, &enc_b);
        return tape.batch_norm(lin, bn_gamma, bn_beta, bn, training);
    }

    // Initial decoder states from one encoder output row.
    std::pair<nn::Node<T>*, nn::Node<T>*> decoder_init(nn::Tape<T>& tape, nn::Node<T>* enc_out) {
        auto* zeros = tape.input(nn::Tensor<T>(std::vector<int>{hp.hidden}));
        auto* cat = tape.concat(enc_out, zeros);
        auto* h1 = tape.tanh_op(tape.linear(cat, bridge1_w, &bridge1_b));
        auto* h2 = tape.tanh_op(tape.linear(cat, bridge2_w, &bridge2_b));
        return {h1, h2};
    }

    // One decode step: returns logits over the summary vocabulary and the new
    // GRU states.
    struct StepOut {
        nn::Node<T>* logits;
        nn::Node<T>* h1;
        nn::Node<T>* h2;
    };
    StepOut decode_step(nn::Tape<T>& tape, int prev_token, nn::Node<T>* h1, nn::Node<T>* h2) {
        std::array<int, 1> id{prev_token};
        auto* x = tape.row(tape.rows_const(dec_table, id), 0);
        auto [n1, n2] = nn::gru_stack2(tape, x, h1, h2, gru1, gru2);
        auto* feat = tape.tanh_op(tape.linear(n2, out_w, &out_b));
        auto* logits = tape.linear_const(feat, dec_table, &out_bias);
        return {logits, n1, n2};
    }
};

struct DbaeTrainConfig {
    int epochs = 8;
    int batch = 32;
    uint64_t seed = 1;
    nn::AdamConfig adam;
    double heldout_frac = 0.05;
    bool verbose = false;
    std::string log_tag = "dbae";
};

struct DbaeTrainStats {
    std::vector<double> train_loss;    // per epoch
    std::vector<double> heldout_loss;  // per epoch
};

// Reconstruction training: cross-entropy of the clean sequence given the
// noised input. inputs_shared and targets_summary are parallel encodings of
// the same summaries. Throws DivergenceError naming the step on NaN.
template <class T>
DbaeTrainStats dbae_train(Dbae<T>& model, const std::vector<std::vector<int>>& inputs_shared,
                          const std::vector<std::vector<int>>& targets_summary,
                          std::span<const int> insert_pool, const DbaeTrainConfig& cfg);

struct DbaeDecodeResult {
    std::vector<int> ids;       // summary-vocab ids
    bool used_fallback = false; // all-dropped input pooled unweighted
};

// Summarization mode: weighted mean pooling with the moment-ratio weights and
// an additive lambda bias on every input word's output score; beam decode.
template <class T>
DbaeDecodeResult dbae_summarize(Dbae<T>& model, const std::vector<int>& fulltext_shared,
                                std::span<const float> weights_shared,
                                std::span<const int> shared_to_summary);

// Teacher-forced reconstruction loss of given pairs (no training), used for
// held-out reporting.
template <class T>
double dbae_heldout_loss(Dbae<T>& model, const std::vector<std::vector<int>>& inputs_shared,
                         const std::vector<std::vector<int>>& targets_summary, uint64_t seed,
                         std::span<const int> insert_pool);

}  // namespace btsumm

#include "btsumm/dbae_impl.hpp"

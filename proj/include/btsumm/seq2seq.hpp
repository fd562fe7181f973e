#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "btsumm/corpus.hpp"
#include "btsumm/embeddings.hpp"
#include "btsumm/nn/checkpoint.hpp"
#include "btsumm/nn/optim.hpp"
#include "btsumm/nn/tape.hpp"

namespace btsumm {

enum class Direction { kFullToSummary, kSummaryToFull };

std::string direction_name(Direction d);
Direction direction_from_name(const std::string& name);

struct Seq2SeqHParams {
    int emb_dim = 512;
    int hidden = 256;
    double len_norm = 0.7;          // beam scores divided by length^this
    bool freeze_embeddings = false;
};

// Attention encoder-decoder: bidirectional single-layer GRU encoder (hidden
// per direction), single-layer GRU decoder with dot-product attention over
// projected encoder states, output projection tied to the output embeddings.
template <class T>
struct Seq2Seq {
    Seq2SeqHParams hp;
    Direction direction = Direction::kFullToSummary;
    int in_vocab = 0;
    int out_vocab = 0;

    nn::Param<T> emb_in, emb_out;
    nn::GruLayer<T> enc_fwd, enc_bwd, dec;
    nn::Param<T> enc_proj_w, enc_proj_b;  // 2h -> h attention memory
    nn::Param<T> bridge_w, bridge_b;      // 2h -> h decoder init
    nn::Param<T> comb_w, comb_b;          // [h ; ctx] -> emb_dim
    nn::Param<T> out_bias;                // [out_vocab]

    static Seq2Seq<T> build(Direction dir, int in_vocab, int out_vocab,
                            const Seq2SeqHParams& hp, uint64_t seed);

    // Copies pretrained rows (by id map) into the embedding tables.
    void load_pretrained_embeddings(const EmbeddingMatrix& shared,
                                    std::span<const int> in_to_shared,
                                    std::span<const int> out_to_shared);

    std::vector<nn::Param<T>*> params();
    std::vector<std::pair<std::string, nn::Tensor<T>*>> state_tensors();

    struct Encoded {
        nn::Node<T>* keys;  // [steps, hidden]
        nn::Node<T>* state; // initial decoder state [hidden]
    };
    Encoded encode(nn::Tape<T>& tape, const std::vector<int>& input_ids);

    struct StepOut {
        nn::Node<T>* logits;  // [out_vocab]
        nn::Node<T>* state;
    };
    StepOut decode_step(nn::Tape<T>& tape, int prev_token, nn::Node<T>* state, nn::Node<T>* keys);

    // Teacher-forced mean token cross-entropy for one pair.
    nn::Node<T>* pair_loss(nn::Tape<T>& tape, const std::vector<int>& input_ids,
                           const std::vector<int>& output_ids);
};

struct Seq2SeqTrainConfig {
    int epochs = 10;
    uint64_t seed = 1;
    nn::AdamConfig adam;
    double val_frac = 0.05;  // 0 disables early stopping
    int patience = 3;
    bool verbose = false;
    std::string log_tag = "seq2seq";
};

struct Seq2SeqTrainStats {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;
    bool early_stopped = false;
};

using IdPairs = std::vector<std::pair<std::vector<int>, std::vector<int>>>;

template <class T>
Seq2SeqTrainStats train_supervised(Seq2Seq<T>& model, const IdPairs& pairs,
                                   const Seq2SeqTrainConfig& cfg);

// Teacher-forced next-token accuracy (sanity metric for the copy task).
template <class T>
double token_accuracy(Seq2Seq<T>& model, const IdPairs& pairs);

struct GenerationConfig {
    enum class Mode { kSample, kBeam };
    Mode mode = Mode::kSample;
    int k = 15;          // top-k sampling pool
    int beam = 5;
    int min_len = 0;     // EOS masked before this many tokens
    int max_len = 12;
    double len_norm = 0.7;
    uint64_t seed = 0;
};

template <class T>
std::vector<int> generate(Seq2Seq<T>& model, const std::vector<int>& input_ids,
                          const GenerationConfig& cfg);

// Collapses runs of UNK to one token and cuts everything after the first
// period token (the period itself is kept). period_id < 0 disables the cut.
std::vector<int> postprocess(const std::vector<int>& ids, int period_id,
                             int unk_id = Vocabulary::kUnk);

}  // namespace btsumm

#include "btsumm/seq2seq_impl.hpp"

#pragma once

#include <algorithm>
#include <array>
#include <numeric>

#include "btsumm/decode_util.hpp"

namespace btsumm {

namespace detail {

// Builds the batched encoder output for a set of (already noised) inputs.
// Returns the BN output node [B, enc_dim].
template <class T>
nn::Node<T>* dbae_encode_batch(Dbae<T>& model, nn::Tape<T>& tape,
                               const std::vector<const std::vector<int>*>& inputs,
                               bool training) {
    std::vector<nn::Node<T>*> pooled;
    pooled.reserve(inputs.size());
    for (const auto* in : inputs) {
        if (in->empty()) {
            pooled.push_back(tape.input(nn::Tensor<T>(std::vector<int>{model.emb_dim})));
            continue;
        }
        auto* rows = tape.rows_const(model.enc_table, *in);
        pooled.push_back(tape.mean_pool(rows));
    }
    auto* batch = tape.stack_rows(pooled);
    return model.encode_pooled(tape, batch, training);
}

template <class T>
nn::Node<T>* dbae_sequence_loss(Dbae<T>& model, nn::Tape<T>& tape, nn::Node<T>* enc_row,
                                const std::vector<int>& target_summary) {
    auto [h1, h2] = model.decoder_init(tape, enc_row);
    std::vector<int> targets = target_summary;
    targets.push_back(Vocabulary::kEos);
    std::vector<nn::Node<T>*> logits;
    logits.reserve(targets.size());
    int prev = Vocabulary::kEos;  // EOS doubles as the start token
    for (size_t t = 0; t < targets.size(); ++t) {
        auto step = model.decode_step(tape, prev, h1, h2);
        logits.push_back(step.logits);
        h1 = step.h1;
        h2 = step.h2;
        prev = targets[t];
    }
    return tape.cross_entropy(tape.stack_rows(logits), targets, nn::Reduction::kMean);
}

}  // namespace detail

template <class T>
DbaeTrainStats dbae_train(Dbae<T>& model, const std::vector<std::vector<int>>& inputs_shared,
                          const std::vector<std::vector<int>>& targets_summary,
                          std::span<const int> insert_pool, const DbaeTrainConfig& cfg) {
    if (inputs_shared.size() != targets_summary.size())
        throw InvalidArgument("dbae_train: input/target count mismatch");
    DbaeTrainStats stats;
    if (cfg.epochs <= 0 || inputs_shared.empty()) return stats;

    // trailing slice is held out for epoch-over-epoch loss reporting
    size_t n_total = inputs_shared.size();
    size_t n_held = std::min(n_total / 2, std::max<size_t>(static_cast<size_t>(
                                              static_cast<double>(n_total) * cfg.heldout_frac),
                                          n_total >= 40 ? 16 : 0));
    size_t n_train = n_total - n_held;

    nn::Adam<T> opt(model.params(), cfg.adam);

    std::vector<size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    int64_t step_index = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto shuffle_rng = make_rng(cfg.seed, 0xd5, static_cast<uint64_t>(epoch));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng() % i]);

        double epoch_loss = 0;
        int64_t batches = 0;
        for (size_t start = 0; start < n_train; start += static_cast<size_t>(cfg.batch)) {
            size_t stop = std::min(n_train, start + static_cast<size_t>(cfg.batch));
            nn::Tape<T> tape(std::is_same_v<T, double>);
            std::vector<std::vector<int>> noised(stop - start);
            std::vector<const std::vector<int>*> enc_in;
            for (size_t i = start; i < stop; ++i) {
                size_t idx = order[i];
                noised[i - start] =
                    dbae_noise(inputs_shared[idx], model.hp.noise_p,
                               mix_seed(cfg.seed, static_cast<uint64_t>(epoch),
                                        static_cast<uint64_t>(idx)),
                               insert_pool);
                enc_in.push_back(&noised[i - start]);
            }
            auto* enc = detail::dbae_encode_batch(model, tape, enc_in, true);
            std::vector<nn::Node<T>*> losses;
            for (size_t i = start; i < stop; ++i) {
                auto* row = tape.row(enc, static_cast<int>(i - start));
                losses.push_back(
                    detail::dbae_sequence_loss(model, tape, row, targets_summary[order[i]]));
            }
            auto* loss = tape.affine(tape.sum_scalars(losses), T(1) / static_cast<T>(losses.size()),
                                     T(0));
            double loss_v = static_cast<double>(loss->val.v[0]);
            if (!std::isfinite(loss_v))
                throw DivergenceError("dbae_train diverged at step " + std::to_string(step_index));
            opt.zero_grad();
            tape.backward(loss);
            opt.clip();
            opt.step();
            epoch_loss += loss_v;
            ++batches;
            ++step_index;
        }
        stats.train_loss.push_back(batches > 0 ? epoch_loss / static_cast<double>(batches) : 0.0);

        if (n_held > 0) {
            std::vector<std::vector<int>> hin(inputs_shared.begin() + static_cast<ptrdiff_t>(n_train),
                                              inputs_shared.end());
            std::vector<std::vector<int>> htg(targets_summary.begin() + static_cast<ptrdiff_t>(n_train),
                                              targets_summary.end());
            stats.heldout_loss.push_back(
                dbae_heldout_loss(model, hin, htg, mix_seed(cfg.seed, 0xeee), insert_pool));
        }
        if (cfg.verbose)
            log_line(cfg.log_tag,
                     "epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) +
                         " loss=" + format_double(stats.train_loss.back()) +
                         (n_held > 0 ? " heldout=" + format_double(stats.heldout_loss.back())
                                     : std::string()));
    }
    return stats;
}

template <class T>
double dbae_heldout_loss(Dbae<T>& model, const std::vector<std::vector<int>>& inputs_shared,
                         const std::vector<std::vector<int>>& targets_summary, uint64_t seed,
                         std::span<const int> insert_pool) {
    if (inputs_shared.empty()) return 0.0;
    double total = 0;
    size_t batch = 32;
    for (size_t start = 0; start < inputs_shared.size(); start += batch) {
        size_t stop = std::min(inputs_shared.size(), start + batch);
        nn::Tape<T> tape(false, false);
        std::vector<std::vector<int>> noised(stop - start);
        std::vector<const std::vector<int>*> enc_in;
        for (size_t i = start; i < stop; ++i) {
            noised[i - start] = dbae_noise(inputs_shared[i], model.hp.noise_p,
                                           mix_seed(seed, static_cast<uint64_t>(i)), insert_pool);
            enc_in.push_back(&noised[i - start]);
        }
        // held-out loss uses inference-mode batch norm
        auto* enc = detail::dbae_encode_batch(model, tape, enc_in, false);
        for (size_t i = start; i < stop; ++i) {
            auto* row = tape.row(enc, static_cast<int>(i - start));
            total += static_cast<double>(
                detail::dbae_sequence_loss(model, tape, row, targets_summary[i])->val.v[0]);
        }
    }
    return total / static_cast<double>(inputs_shared.size());
}

template <class T>
DbaeDecodeResult dbae_summarize(Dbae<T>& model, const std::vector<int>& fulltext_shared,
                                std::span<const float> weights_shared,
                                std::span<const int> shared_to_summary) {
    DbaeDecodeResult res;
    nn::Tape<T> tape(false, false);

    // weighted BoW encoding; all-dropped inputs fall back to the plain mean
    nn::Node<T>* pooled;
    if (fulltext_shared.empty()) {
        pooled = tape.input(nn::Tensor<T>(std::vector<int>{model.emb_dim}));
        res.used_fallback = true;
    } else {
        std::vector<T> w(fulltext_shared.size());
        T wsum = 0;
        for (size_t i = 0; i < fulltext_shared.size(); ++i) {
            w[i] = static_cast<T>(weights_shared[static_cast<size_t>(fulltext_shared[i])]);
            wsum += w[i];
        }
        auto* rows = tape.rows_const(model.enc_table, fulltext_shared);
        if (wsum > T(0)) {
            pooled = tape.weighted_mean_pool(rows, std::move(w));
        } else {
            pooled = tape.mean_pool(rows);
            res.used_fallback = true;
        }
    }
    auto* enc = model.encode_pooled(tape, tape.stack_rows({pooled}), false);
    auto* enc_row = tape.row(enc, 0);
    auto [h1, h2] = model.decoder_init(tape, enc_row);

    // lambda bias: every input word type present in the summary vocabulary
    // gets +lambda on its score at every step
    nn::Tensor<T> bias(std::vector<int>{model.summary_vocab});
    for (int sid : fulltext_shared) {
        int vs = shared_to_summary[static_cast<size_t>(sid)];
        if (vs < Vocabulary::kNumSpecials) continue;
        bias.v[static_cast<size_t>(vs)] = static_cast<T>(model.hp.lambda_bias);
    }

    struct Beam {
        nn::Node<T>* h1;
        nn::Node<T>* h2;
        std::vector<int> tokens;
        double logprob = 0.0;
    };
    std::vector<Beam> live{Beam{h1, h2, {}, 0.0}};
    std::vector<decode::Finished> done;

    for (int step = 0; step < model.hp.max_len && !live.empty(); ++step) {
        struct Cand {
            size_t beam;
            int token;
            double score;
        };
        std::vector<Cand> cands;
        std::vector<std::pair<nn::Node<T>*, nn::Node<T>*>> next_states(live.size());
        for (size_t b = 0; b < live.size(); ++b) {
            int prev = live[b].tokens.empty() ? Vocabulary::kEos : live[b].tokens.back();
            auto out = model.decode_step(tape, prev, live[b].h1, live[b].h2);
            next_states[b] = {out.h1, out.h2};
            auto* biased = tape.add_const(out.logits, bias);
            std::vector<double> logp = decode::log_softmax_masked<T>(
                biased->val.v, {Vocabulary::kPad});
            auto top = decode::topk(logp, model.hp.beam);
            for (auto& [tok, lp] : top)
                cands.push_back({b, tok, live[b].logprob + lp});
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.token < b.token;
        });
        std::vector<Beam> next;
        for (const auto& c : cands) {
            if (static_cast<int>(next.size()) + 0 >= model.hp.beam) break;
            Beam nb;
            nb.h1 = next_states[c.beam].first;
            nb.h2 = next_states[c.beam].second;
            nb.tokens = live[c.beam].tokens;
            nb.logprob = c.score;
            if (c.token == Vocabulary::kEos) {
                done.push_back(decode::Finished{nb.tokens,
                                                decode::length_normalized(nb.logprob,
                                                                          nb.tokens.size() + 1,
                                                                          model.hp.len_norm)});
                continue;
            }
            nb.tokens.push_back(c.token);
            next.push_back(std::move(nb));
        }
        live = std::move(next);
    }
    for (auto& b : live)
        done.push_back(decode::Finished{
            b.tokens, decode::length_normalized(b.logprob, b.tokens.size() + 1, model.hp.len_norm)});
    res.ids = decode::best_finished(done);
    return res;
}

}  // namespace btsumm

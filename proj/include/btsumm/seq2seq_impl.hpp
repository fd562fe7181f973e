#pragma once

#include <algorithm>
#include <array>
#include <numeric>

#include "btsumm/decode_util.hpp"

namespace btsumm {

template <class T>
Seq2Seq<T> Seq2Seq<T>::build(Direction dir, int in_vocab_, int out_vocab_,
                             const Seq2SeqHParams& hp_, uint64_t seed) {
    Seq2Seq<T> m;
    m.hp = hp_;
    m.direction = dir;
    m.in_vocab = in_vocab_;
    m.out_vocab = out_vocab_;
    const int e = hp_.emb_dim, h = hp_.hidden;
    m.emb_in = nn::Param<T>("emb_in", {in_vocab_, e});
    m.emb_out = nn::Param<T>("emb_out", {out_vocab_, e});
    m.enc_fwd = nn::GruLayer<T>("enc.fwd", e, h);
    m.enc_bwd = nn::GruLayer<T>("enc.bwd", e, h);
    m.dec = nn::GruLayer<T>("dec.gru", e, h);
    m.enc_proj_w = nn::Param<T>("enc.proj.w", {h, 2 * h});
    m.enc_proj_b = nn::Param<T>("enc.proj.b", {h});
    m.bridge_w = nn::Param<T>("bridge.w", {h, 2 * h});
    m.bridge_b = nn::Param<T>("bridge.b", {h});
    m.comb_w = nn::Param<T>("comb.w", {e, 2 * h});
    m.comb_b = nn::Param<T>("comb.b", {e});
    m.out_bias = nn::Param<T>("out_bias", {out_vocab_});

    auto rng = make_rng(seed, 0x5251);
    m.emb_in.init_uniform(rng, e);
    m.emb_out.init_uniform(rng, e);
    m.enc_fwd.init(rng);
    m.enc_bwd.init(rng);
    m.dec.init(rng);
    m.enc_proj_w.init_uniform(rng, 2 * h);
    m.bridge_w.init_uniform(rng, 2 * h);
    m.comb_w.init_uniform(rng, 2 * h);
    return m;
}

template <class T>
void Seq2Seq<T>::load_pretrained_embeddings(const EmbeddingMatrix& shared,
                                            std::span<const int> in_to_shared,
                                            std::span<const int> out_to_shared) {
    if (shared.dim != hp.emb_dim)
        throw InvalidArgument("pretrained embedding dim differs from model emb_dim");
    auto copy_rows = [&shared](nn::Param<T>& table, std::span<const int> map) {
        for (size_t i = 0; i < map.size(); ++i) {
            int sid = map[i];
            if (sid == Vocabulary::kUnk && i != Vocabulary::kUnk) continue;  // keep random init
            const float* src = shared.row(sid);
            for (int j = 0; j < shared.dim; ++j)
                table.value.at(static_cast<int>(i), j) = static_cast<T>(src[j]);
        }
    };
    copy_rows(emb_in, in_to_shared);
    copy_rows(emb_out, out_to_shared);
}

template <class T>
std::vector<nn::Param<T>*> Seq2Seq<T>::params() {
    std::vector<nn::Param<T>*> ps;
    if (!hp.freeze_embeddings) {
        ps.push_back(&emb_in);
        ps.push_back(&emb_out);
    }
    for (auto* p : enc_fwd.params()) ps.push_back(p);
    for (auto* p : enc_bwd.params()) ps.push_back(p);
    for (auto* p : dec.params()) ps.push_back(p);
    for (nn::Param<T>* p : {&enc_proj_w, &enc_proj_b, &bridge_w, &bridge_b, &comb_w, &comb_b,
                            &out_bias})
        ps.push_back(p);
    return ps;
}

template <class T>
std::vector<std::pair<std::string, nn::Tensor<T>*>> Seq2Seq<T>::state_tensors() {
    std::vector<std::pair<std::string, nn::Tensor<T>*>> ts;
    ts.emplace_back("emb_in", &emb_in.value);
    ts.emplace_back("emb_out", &emb_out.value);
    for (auto* layer : {&enc_fwd, &enc_bwd, &dec})
        for (auto* p : layer->params()) ts.emplace_back(p->name, &p->value);
    for (nn::Param<T>* p : {&enc_proj_w, &enc_proj_b, &bridge_w, &bridge_b, &comb_w, &comb_b,
                            &out_bias})
        ts.emplace_back(p->name, &p->value);
    return ts;
}

template <class T>
typename Seq2Seq<T>::Encoded Seq2Seq<T>::encode(nn::Tape<T>& tape,
                                                const std::vector<int>& input_ids) {
    std::vector<int> ids = input_ids;
    ids.push_back(Vocabulary::kEos);  // non-empty input and an end anchor
    const int n = static_cast<int>(ids.size());
    nn::Node<T>* emb = hp.freeze_embeddings ? tape.rows_const(emb_in.value, ids)
                                            : tape.embed(emb_in, ids);
    std::vector<nn::Node<T>*> xs(static_cast<size_t>(n));
    for (int t = 0; t < n; ++t) xs[static_cast<size_t>(t)] = tape.row(emb, t);

    std::vector<nn::Node<T>*> fwd(static_cast<size_t>(n)), bwd(static_cast<size_t>(n));
    nn::Node<T>* h = tape.input(nn::Tensor<T>(std::vector<int>{hp.hidden}));
    for (int t = 0; t < n; ++t) {
        h = nn::gru_cell(tape, xs[static_cast<size_t>(t)], h, enc_fwd);
        fwd[static_cast<size_t>(t)] = h;
    }
    h = tape.input(nn::Tensor<T>(std::vector<int>{hp.hidden}));
    for (int t = n - 1; t >= 0; --t) {
        h = nn::gru_cell(tape, xs[static_cast<size_t>(t)], h, enc_bwd);
        bwd[static_cast<size_t>(t)] = h;
    }

    std::vector<nn::Node<T>*> states(static_cast<size_t>(n));
    for (int t = 0; t < n; ++t)
        states[static_cast<size_t>(t)] =
            tape.concat(fwd[static_cast<size_t>(t)], bwd[static_cast<size_t>(t)]);
    auto* memory = tape.stack_rows(states);                    // [n, 2h]
    auto* keys = tape.tanh_op(tape.linear(memory, enc_proj_w, &enc_proj_b));  // [n, h]
    auto* final_cat = tape.concat(fwd[static_cast<size_t>(n - 1)], bwd[0]);
    auto* s0 = tape.tanh_op(tape.linear(final_cat, bridge_w, &bridge_b));
    return {keys, s0};
}

template <class T>
typename Seq2Seq<T>::StepOut Seq2Seq<T>::decode_step(nn::Tape<T>& tape, int prev_token,
                                                     nn::Node<T>* state, nn::Node<T>* keys) {
    std::array<int, 1> pid{prev_token};
    nn::Node<T>* x = hp.freeze_embeddings
                         ? tape.row(tape.rows_const(emb_out.value, pid), 0)
                         : tape.row(tape.embed(emb_out, {prev_token}), 0);
    auto* h = nn::gru_cell(tape, x, state, dec);
    auto att = nn::dot_attention(tape, h, keys, keys);
    auto* feat = tape.tanh_op(tape.linear(tape.concat(h, att.context), comb_w, &comb_b));
    nn::Node<T>* logits = hp.freeze_embeddings
                              ? tape.linear_const(feat, emb_out.value, &out_bias)
                              : tape.linear(feat, emb_out, &out_bias);
    return {logits, h};
}

template <class T>
nn::Node<T>* Seq2Seq<T>::pair_loss(nn::Tape<T>& tape, const std::vector<int>& input_ids,
                                   const std::vector<int>& output_ids) {
    Encoded enc = encode(tape, input_ids);
    std::vector<int> targets = output_ids;
    targets.push_back(Vocabulary::kEos);
    std::vector<nn::Node<T>*> logits;
    logits.reserve(targets.size());
    nn::Node<T>* state = enc.state;
    int prev = Vocabulary::kEos;
    for (size_t t = 0; t < targets.size(); ++t) {
        StepOut so = decode_step(tape, prev, state, enc.keys);
        logits.push_back(so.logits);
        state = so.state;
        prev = targets[t];
    }
    return tape.cross_entropy(tape.stack_rows(logits), targets, nn::Reduction::kMean);
}

namespace detail {

template <class T>
double dataset_loss(Seq2Seq<T>& model, const IdPairs& pairs, size_t begin, size_t end) {
    double total = 0;
    for (size_t i = begin; i < end; ++i) {
        nn::Tape<T> tape(false, false);
        total += static_cast<double>(
            model.pair_loss(tape, pairs[i].first, pairs[i].second)->val.v[0]);
    }
    return end > begin ? total / static_cast<double>(end - begin) : 0.0;
}

template <class T>
std::vector<nn::Tensor<T>> snapshot_params(Seq2Seq<T>& model) {
    std::vector<nn::Tensor<T>> snap;
    for (auto& [name, t] : model.state_tensors()) snap.push_back(*t);
    return snap;
}

template <class T>
void restore_params(Seq2Seq<T>& model, const std::vector<nn::Tensor<T>>& snap) {
    auto ts = model.state_tensors();
    for (size_t i = 0; i < ts.size(); ++i) *ts[i].second = snap[i];
}

}  // namespace detail

template <class T>
Seq2SeqTrainStats train_supervised(Seq2Seq<T>& model, const IdPairs& pairs,
                                   const Seq2SeqTrainConfig& cfg) {
    if (pairs.empty()) throw InvalidArgument("train_supervised: empty dataset");
    Seq2SeqTrainStats stats;

    size_t n_val = cfg.val_frac > 0
                       ? std::min(pairs.size() / 2,
                                  std::max<size_t>(static_cast<size_t>(
                                                       static_cast<double>(pairs.size()) * cfg.val_frac),
                                                   pairs.size() >= 40 ? 16 : 0))
                       : 0;
    size_t n_train = pairs.size() - n_val;
    if (n_train == 0) {
        n_train = pairs.size();
        n_val = 0;
    }

    nn::Adam<T> opt(model.params(), cfg.adam);

    std::vector<size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<nn::Tensor<T>> best_snap;
    int bad_epochs = 0;
    int64_t step_index = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto rng = make_rng(cfg.seed, 0x5252, static_cast<uint64_t>(epoch));
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        double epoch_loss = 0;
        for (size_t i = 0; i < n_train; ++i) {
            const auto& pair = pairs[order[i]];
            nn::Tape<T> tape(std::is_same_v<T, double>);
            auto* loss = model.pair_loss(tape, pair.first, pair.second);
            double lv = static_cast<double>(loss->val.v[0]);
            if (!std::isfinite(lv))
                throw DivergenceError("train_supervised diverged at step " +
                                      std::to_string(step_index));
            opt.zero_grad();
            tape.backward(loss);
            opt.clip();
            opt.step();
            epoch_loss += lv;
            ++step_index;
        }
        stats.train_loss.push_back(epoch_loss / static_cast<double>(n_train));

        if (n_val > 0) {
            double val = detail::dataset_loss(model, pairs, n_train, pairs.size());
            stats.val_loss.push_back(val);
            if (val < best_val) {
                best_val = val;
                best_snap = detail::snapshot_params(model);
                stats.best_epoch = epoch;
                bad_epochs = 0;
            } else {
                ++bad_epochs;
            }
            if (cfg.verbose)
                log_line(cfg.log_tag, "epoch " + std::to_string(epoch + 1) + "/" +
                                          std::to_string(cfg.epochs) + " loss=" +
                                          format_double(stats.train_loss.back()) +
                                          " val=" + format_double(val));
            if (bad_epochs >= cfg.patience) {
                stats.early_stopped = true;
                break;
            }
        } else if (cfg.verbose) {
            log_line(cfg.log_tag, "epoch " + std::to_string(epoch + 1) + "/" +
                                      std::to_string(cfg.epochs) +
                                      " loss=" + format_double(stats.train_loss.back()));
        }
    }
    if (!best_snap.empty() && stats.best_epoch >= 0) detail::restore_params(model, best_snap);
    return stats;
}

template <class T>
double token_accuracy(Seq2Seq<T>& model, const IdPairs& pairs) {
    int64_t correct = 0, total = 0;
    for (const auto& [in, out] : pairs) {
        nn::Tape<T> tape(false, false);
        auto enc = model.encode(tape, in);
        std::vector<int> targets = out;
        targets.push_back(Vocabulary::kEos);
        nn::Node<T>* state = enc.state;
        int prev = Vocabulary::kEos;
        for (int tgt : targets) {
            auto so = model.decode_step(tape, prev, state, enc.keys);
            int best = 0;
            T bv = so.logits->val.v[0];
            for (int j = 1; j < model.out_vocab; ++j)
                if (so.logits->val.v[static_cast<size_t>(j)] > bv) {
                    bv = so.logits->val.v[static_cast<size_t>(j)];
                    best = j;
                }
            if (best == tgt) ++correct;
            ++total;
            state = so.state;
            prev = tgt;
        }
    }
    return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

template <class T>
std::vector<int> generate(Seq2Seq<T>& model, const std::vector<int>& input_ids,
                          const GenerationConfig& cfg) {
    nn::Tape<T> tape(false, false);
    auto enc = model.encode(tape, input_ids);

    if (cfg.mode == GenerationConfig::Mode::kSample) {
        auto rng = make_rng(cfg.seed, 0x9a3);
        std::vector<int> out;
        nn::Node<T>* state = enc.state;
        int prev = Vocabulary::kEos;
        for (int t = 0; t < cfg.max_len; ++t) {
            auto so = model.decode_step(tape, prev, state, enc.keys);
            std::vector<double> logp =
                t < cfg.min_len
                    ? decode::log_softmax_masked<T>(so.logits->val.v,
                                                    {Vocabulary::kPad, Vocabulary::kEos})
                    : decode::log_softmax_masked<T>(so.logits->val.v, {Vocabulary::kPad});
            double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            int tok = decode::sample_topk(logp, cfg.k, u);
            if (tok == Vocabulary::kEos) break;
            out.push_back(tok);
            state = so.state;
            prev = tok;
        }
        return out;
    }

    // length-normalized beam search
    struct Beam {
        nn::Node<T>* state;
        std::vector<int> tokens;
        double logprob = 0.0;
    };
    std::vector<Beam> live{Beam{enc.state, {}, 0.0}};
    std::vector<decode::Finished> done;
    for (int step = 0; step < cfg.max_len && !live.empty(); ++step) {
        struct Cand {
            size_t beam;
            int token;
            double score;
        };
        std::vector<Cand> cands;
        std::vector<nn::Node<T>*> next_states(live.size());
        for (size_t b = 0; b < live.size(); ++b) {
            int prev = live[b].tokens.empty() ? Vocabulary::kEos : live[b].tokens.back();
            auto so = model.decode_step(tape, prev, live[b].state, enc.keys);
            next_states[b] = so.state;
            std::vector<double> logp =
                step < cfg.min_len
                    ? decode::log_softmax_masked<T>(so.logits->val.v,
                                                    {Vocabulary::kPad, Vocabulary::kEos})
                    : decode::log_softmax_masked<T>(so.logits->val.v, {Vocabulary::kPad});
            for (auto& [tok, lp] : decode::topk(logp, cfg.beam))
                cands.push_back({b, tok, live[b].logprob + lp});
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.token < b.token;
        });
        std::vector<Beam> next;
        for (const auto& c : cands) {
            if (static_cast<int>(next.size()) >= cfg.beam) break;
            Beam nb;
            nb.state = next_states[c.beam];
            nb.tokens = live[c.beam].tokens;
            nb.logprob = c.score;
            if (c.token == Vocabulary::kEos) {
                done.push_back(decode::Finished{
                    nb.tokens,
                    decode::length_normalized(nb.logprob, nb.tokens.size() + 1, cfg.len_norm)});
                continue;
            }
            nb.tokens.push_back(c.token);
            next.push_back(std::move(nb));
        }
        live = std::move(next);
    }
    for (auto& b : live)
        done.push_back(decode::Finished{
            b.tokens, decode::length_normalized(b.logprob, b.tokens.size() + 1, cfg.len_norm)});
    return decode::best_finished(done);
}

}  // namespace btsumm

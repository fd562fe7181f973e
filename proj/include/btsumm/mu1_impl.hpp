#pragma once

#include <algorithm>
#include <numeric>
#include <unordered_set>

namespace btsumm {

template <class T>
nn::Node<T>* moments_batch_loss(Mu1Model<T>& model, nn::Tape<T>& tape,
                                const std::vector<const std::vector<int>*>& batch,
                                std::span<const int> shared_to_summary,
                                std::span<const int> summary_to_shared, const MomentStats& stats,
                                bool training) {
    const size_t bsz = batch.size();
    auto* probs = model.forward_probs(tape, batch, shared_to_summary, training);
    auto* batch_mean = tape.mean_rows(probs);  // [V_summary]

    // batch presence frequencies per summary word
    std::vector<int> present_count(static_cast<size_t>(model.summary_vocab), 0);
    std::unordered_set<int> seen;
    for (const auto* seq : batch) {
        seen.clear();
        for (int sid : *seq) {
            int vs = shared_to_summary[static_cast<size_t>(sid)];
            if (vs < Vocabulary::kNumSpecials) continue;
            if (seen.insert(vs).second) present_count[static_cast<size_t>(vs)]++;
        }
    }

    std::vector<T> targets(static_cast<size_t>(model.summary_vocab), T(0));
    std::vector<T> active(static_cast<size_t>(model.summary_vocab), T(0));
    for (int vs = Vocabulary::kNumSpecials; vs < model.summary_vocab; ++vs) {
        int sid = summary_to_shared[static_cast<size_t>(vs)];
        if (sid < Vocabulary::kNumSpecials) continue;  // not representable in shared vocab
        double mu_f = stats.mu_f[static_cast<size_t>(sid)];
        if (mu_f <= 0.0) continue;  // excluded from the sum
        double mu_s = stats.mu_s[static_cast<size_t>(sid)];
        double batch_mu_f =
            static_cast<double>(present_count[static_cast<size_t>(vs)]) / static_cast<double>(bsz);
        double target = std::clamp(batch_mu_f / mu_f * mu_s, 0.0, 1.0);
        targets[static_cast<size_t>(vs)] = static_cast<T>(target);
        active[static_cast<size_t>(vs)] = T(1);
    }
    return tape.binary_cross_entropy(batch_mean, std::move(targets), nn::Reduction::kSum,
                                     std::move(active));
}

template <class T>
Mu1TrainStats moments_train(Mu1Model<T>& model, const std::vector<std::vector<int>>& fulltexts,
                            std::span<const int> shared_to_summary,
                            std::span<const int> summary_to_shared, const MomentStats& stats,
                            const Mu1TrainConfig& cfg) {
    Mu1TrainStats out;
    if (cfg.epochs <= 0 || fulltexts.empty()) return out;

    nn::Adam<T> opt(model.params(), cfg.adam);

    std::vector<size_t> order(fulltexts.size());
    std::iota(order.begin(), order.end(), 0);
    int64_t step_index = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto rng = make_rng(cfg.seed, 0x3a32, static_cast<uint64_t>(epoch));
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        double epoch_loss = 0;
        int64_t batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
            size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
            if (stop - start < 2) continue;  // batch norm needs a real batch
            std::vector<const std::vector<int>*> batch;
            batch.reserve(stop - start);
            for (size_t i = start; i < stop; ++i) batch.push_back(&fulltexts[order[i]]);
            nn::Tape<T> tape(std::is_same_v<T, double>);
            auto* loss = moments_batch_loss(model, tape, batch, shared_to_summary,
                                            summary_to_shared, stats, true);
            double lv = static_cast<double>(loss->val.v[0]);
            if (!std::isfinite(lv))
                throw DivergenceError("moments_train diverged at step " +
                                      std::to_string(step_index));
            opt.zero_grad();
            tape.backward(loss);
            opt.clip();
            opt.step();
            epoch_loss += lv;
            ++batches;
            ++step_index;
        }
        out.epoch_loss.push_back(batches > 0 ? epoch_loss / static_cast<double>(batches) : 0.0);
        if (cfg.verbose)
            log_line(cfg.log_tag, "epoch " + std::to_string(epoch + 1) + "/" +
                                      std::to_string(cfg.epochs) +
                                      " loss=" + format_double(out.epoch_loss.back()));
    }
    return out;
}

template <class T>
std::vector<int> moments_extract(Mu1Model<T>& model, const std::vector<int>& fulltext_shared,
                                 std::span<const int> shared_to_summary) {
    nn::Tape<T> tape(false, false);
    std::vector<const std::vector<int>*> batch{&fulltext_shared};
    auto* probs = model.forward_probs(tape, batch, shared_to_summary, false);
    std::vector<int> out;
    std::unordered_set<int> emitted;
    for (int sid : fulltext_shared) {
        if (static_cast<int>(out.size()) >= model.hp.max_len) break;
        int vs = shared_to_summary[static_cast<size_t>(sid)];
        if (vs < Vocabulary::kNumSpecials) continue;
        if (emitted.count(vs)) continue;  // presence semantics: emit once
        emitted.insert(vs);
        if (static_cast<double>(probs->val.at(0, vs)) > model.hp.eta) out.push_back(vs);
    }
    return out;
}

template <class T>
std::vector<double> moments_marginals(Mu1Model<T>& model,
                                      const std::vector<std::vector<int>>& fulltexts,
                                      std::span<const int> shared_to_summary, int batch) {
    std::vector<double> acc(static_cast<size_t>(model.summary_vocab), 0.0);
    for (size_t start = 0; start < fulltexts.size(); start += static_cast<size_t>(batch)) {
        size_t stop = std::min(fulltexts.size(), start + static_cast<size_t>(batch));
        std::vector<const std::vector<int>*> b;
        for (size_t i = start; i < stop; ++i) b.push_back(&fulltexts[i]);
        nn::Tape<T> tape(false, false);
        auto* probs = model.forward_probs(tape, b, shared_to_summary, false);
        for (size_t r = 0; r < b.size(); ++r)
            for (int vs = 0; vs < model.summary_vocab; ++vs)
                acc[static_cast<size_t>(vs)] +=
                    static_cast<double>(probs->val.at(static_cast<int>(r), vs));
    }
    for (auto& v : acc) v /= static_cast<double>(fulltexts.size());
    return acc;
}

}  // namespace btsumm

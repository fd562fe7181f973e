#include "btsumm/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "btsumm/simd.hpp"

namespace btsumm {

namespace {

void normalize_rows(std::vector<float>& m, int rows, int dim) {
    for (int i = 0; i < rows; ++i) {
        float* r = m.data() + static_cast<size_t>(i) * static_cast<size_t>(dim);
        float norm = std::sqrt(simd::dot(r, r, static_cast<size_t>(dim)));
        if (norm > 1e-12f) simd::scale(1.0f / norm, r, static_cast<size_t>(dim));
    }
}

}  // namespace

SvdResult jacobi_svd(const std::vector<double>& a, int d) {
    if (static_cast<int>(a.size()) != d * d) throw InvalidArgument("jacobi_svd: not square");
    SvdResult res;
    res.dim = d;
    // Work on columns of A; accumulate V as products of the rotations.
    std::vector<double> w = a;  // row-major copy; column j is w[i*d+j]
    std::vector<double> v(static_cast<size_t>(d) * static_cast<size_t>(d), 0.0);
    for (int i = 0; i < d; ++i) v[static_cast<size_t>(i) * d + i] = 1.0;

    auto col_dot = [&](const std::vector<double>& m, int p, int q) {
        double s = 0;
        for (int i = 0; i < d; ++i) s += m[static_cast<size_t>(i) * d + p] * m[static_cast<size_t>(i) * d + q];
        return s;
    };
    auto rotate_cols = [&](std::vector<double>& m, int p, int q, double cs, double sn) {
        for (int i = 0; i < d; ++i) {
            double mp = m[static_cast<size_t>(i) * d + p];
            double mq = m[static_cast<size_t>(i) * d + q];
            m[static_cast<size_t>(i) * d + p] = cs * mp - sn * mq;
            m[static_cast<size_t>(i) * d + q] = sn * mp + cs * mq;
        }
    };

    const int max_sweeps = 60;
    const double tol = 1e-14;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0;
        for (int p = 0; p < d - 1; ++p) {
            for (int q = p + 1; q < d; ++q) {
                double app = col_dot(w, p, p);
                double aqq = col_dot(w, q, q);
                double apq = col_dot(w, p, q);
                if (std::abs(apq) <= tol * std::sqrt(app * aqq) || apq == 0.0) continue;
                off += std::abs(apq);
                double zeta = (aqq - app) / (2.0 * apq);
                double t = (zeta >= 0 ? 1.0 : -1.0) /
                           (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double cs = 1.0 / std::sqrt(1.0 + t * t);
                double sn = cs * t;
                rotate_cols(w, p, q, cs, sn);
                rotate_cols(v, p, q, cs, sn);
            }
        }
        if (off < 1e-15) break;
    }

    // Singular values = column norms; sort descending, carrying U and V.
    std::vector<double> sigma(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) sigma[static_cast<size_t>(j)] = std::sqrt(col_dot(w, j, j));
    std::vector<int> order(static_cast<size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return sigma[static_cast<size_t>(x)] > sigma[static_cast<size_t>(y)]; });

    res.s.resize(static_cast<size_t>(d));
    res.u.assign(static_cast<size_t>(d) * d, 0.0);
    res.v.assign(static_cast<size_t>(d) * d, 0.0);
    double smax = sigma.empty() ? 0.0 : sigma[static_cast<size_t>(order[0])];
    for (int k = 0; k < d; ++k) {
        int j = order[static_cast<size_t>(k)];
        res.s[static_cast<size_t>(k)] = sigma[static_cast<size_t>(j)];
        for (int i = 0; i < d; ++i)
            res.v[static_cast<size_t>(i) * d + k] = v[static_cast<size_t>(i) * d + j];
        if (sigma[static_cast<size_t>(j)] > std::max(1e-300, smax * 1e-13)) {
            double inv = 1.0 / sigma[static_cast<size_t>(j)];
            for (int i = 0; i < d; ++i)
                res.u[static_cast<size_t>(i) * d + k] = w[static_cast<size_t>(i) * d + j] * inv;
        }
    }
    // Complete null columns of U to an orthonormal basis (Gram-Schmidt over
    // unit vectors); keeps Q = U V^T orthogonal for rank-deficient inputs.
    for (int k = 0; k < d; ++k) {
        double norm = 0;
        for (int i = 0; i < d; ++i) {
            double val = res.u[static_cast<size_t>(i) * d + k];
            norm += val * val;
        }
        if (norm > 0.5) continue;
        for (int cand = 0; cand < d; ++cand) {
            std::vector<double> e(static_cast<size_t>(d), 0.0);
            e[static_cast<size_t>(cand)] = 1.0;
            for (int c = 0; c < d; ++c) {
                if (c == k) continue;
                double proj = 0;
                for (int i = 0; i < d; ++i) proj += e[static_cast<size_t>(i)] * res.u[static_cast<size_t>(i) * d + c];
                for (int i = 0; i < d; ++i) e[static_cast<size_t>(i)] -= proj * res.u[static_cast<size_t>(i) * d + c];
            }
            double en = 0;
            for (double x : e) en += x * x;
            if (en > 1e-6) {
                en = 1.0 / std::sqrt(en);
                for (int i = 0; i < d; ++i) res.u[static_cast<size_t>(i) * d + k] = e[static_cast<size_t>(i)] * en;
                break;
            }
        }
    }
    return res;
}

ProcrustesResult orthogonal_procrustes(const std::vector<double>& x,
                                       const std::vector<double>& y, int n, int d) {
    if (static_cast<int>(x.size()) != n * d || static_cast<int>(y.size()) != n * d)
        throw InvalidArgument("orthogonal_procrustes: dimension mismatch");
    std::vector<double> m(static_cast<size_t>(d) * static_cast<size_t>(d));
    simd::gemm_tn(x.data(), y.data(), m.data(), static_cast<size_t>(n), static_cast<size_t>(d),
                  static_cast<size_t>(d));
    SvdResult svd = jacobi_svd(m, d);
    ProcrustesResult res;
    res.dim = d;
    double smax = svd.s.empty() ? 0.0 : svd.s[0];
    res.degenerate = n < d || smax <= 0.0 || svd.s.back() < smax * 1e-10;
    // Q = U V^T
    res.q.assign(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) {
            double uik = svd.u[static_cast<size_t>(i) * d + k];
            if (uik == 0.0) continue;
            for (int j = 0; j < d; ++j)
                res.q[static_cast<size_t>(i) * d + j] += uik * svd.v[static_cast<size_t>(j) * d + k];
        }
    return res;
}

std::vector<int> sinkhorn_match(const std::vector<double>& cost, int n, int m, double reg,
                                int iters) {
    if (static_cast<int>(cost.size()) != n * m) throw InvalidArgument("sinkhorn: bad cost size");
    // Row-shifted Gibbs kernel; the row scaling absorbs the shift exactly, so
    // the hardened argmax is unchanged and exp stays in range.
    std::vector<double> kmat(static_cast<size_t>(n) * static_cast<size_t>(m));
    for (int i = 0; i < n; ++i) {
        const double* crow = cost.data() + static_cast<size_t>(i) * m;
        double cmin = *std::min_element(crow, crow + m);
        double* krow = kmat.data() + static_cast<size_t>(i) * m;
        for (int j = 0; j < m; ++j) krow[j] = std::exp(-(crow[j] - cmin) / reg);
    }
    std::vector<double> u(static_cast<size_t>(n), 1.0 / n), v(static_cast<size_t>(m), 1.0 / m);
    std::vector<double> tmp_n(static_cast<size_t>(n)), tmp_m(static_cast<size_t>(m));
    const double a = 1.0 / n, b = 1.0 / m;
    for (int it = 0; it < iters; ++it) {
        // u = a ./ (K v)
        simd::matvec(kmat.data(), v.data(), tmp_n.data(), static_cast<size_t>(n),
                     static_cast<size_t>(m), false);
        for (int i = 0; i < n; ++i) u[static_cast<size_t>(i)] = a / std::max(tmp_n[static_cast<size_t>(i)], 1e-300);
        // v = b ./ (K^T u)
        std::fill(tmp_m.begin(), tmp_m.end(), 0.0);
        simd::matvec_t_acc(kmat.data(), u.data(), tmp_m.data(), static_cast<size_t>(n),
                           static_cast<size_t>(m));
        for (int j = 0; j < m; ++j) v[static_cast<size_t>(j)] = b / std::max(tmp_m[static_cast<size_t>(j)], 1e-300);
    }
    std::vector<int> match(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        const double* krow = kmat.data() + static_cast<size_t>(i) * m;
        int best = 0;
        double bestv = -1.0;
        for (int j = 0; j < m; ++j) {
            double p = u[static_cast<size_t>(i)] * krow[j] * v[static_cast<size_t>(j)];
            if (p > bestv) {
                bestv = p;
                best = j;
            }
        }
        match[static_cast<size_t>(i)] = best;
    }
    return match;
}

namespace {

// Unit-normalized double copies of the first `rows` non-special vocab rows.
struct TopBlock {
    std::vector<double> mat;  // rows x dim
    std::vector<int> ids;     // vocab ids, frequency order
};

TopBlock top_block(const EmbeddingMatrix& emb, int topk) {
    TopBlock blk;
    int avail = emb.vocab_size - Vocabulary::kNumSpecials;
    int rows = std::min(topk, avail);
    blk.mat.reserve(static_cast<size_t>(rows) * static_cast<size_t>(emb.dim));
    for (int r = 0; r < rows; ++r) {
        int id = Vocabulary::kNumSpecials + r;
        const float* src = emb.row(id);
        double norm = 0;
        for (int j = 0; j < emb.dim; ++j) norm += static_cast<double>(src[j]) * src[j];
        if (norm < 1e-24) continue;  // untrained row
        norm = 1.0 / std::sqrt(norm);
        for (int j = 0; j < emb.dim; ++j) blk.mat.push_back(src[j] * norm);
        blk.ids.push_back(id);
    }
    return blk;
}

std::vector<double> apply_q(const std::vector<double>& x, int n, int d,
                            const std::vector<double>& q) {
    // rows are row-vectors: out = x Q, i.e. out[i,j] = sum_k x[i,k] q[k,j]
    std::vector<double> out(static_cast<size_t>(n) * static_cast<size_t>(d), 0.0);
    for (int i = 0; i < n; ++i) {
        const double* xr = x.data() + static_cast<size_t>(i) * d;
        double* orow = out.data() + static_cast<size_t>(i) * d;
        for (int k = 0; k < d; ++k)
            simd::axpy(xr[k], q.data() + static_cast<size_t>(k) * d, orow, static_cast<size_t>(d));
    }
    return out;
}

}  // namespace

AlignedSpace make_aligned_space(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt,
                                const std::vector<float>& q, bool degenerate) {
    if (src.dim != tgt.dim) throw InvalidArgument("aligned space: dimension mismatch");
    const int d = src.dim;
    if (static_cast<int>(q.size()) != d * d) throw InvalidArgument("aligned space: bad Q size");
    AlignedSpace space;
    space.dim = d;
    space.q = q;
    space.degenerate = degenerate;
    space.src_vocab_size = src.vocab_size;
    space.tgt_vocab_size = tgt.vocab_size;
    space.src_mapped.assign(static_cast<size_t>(src.vocab_size) * static_cast<size_t>(d), 0.0f);
    for (int i = 0; i < src.vocab_size; ++i) {
        const float* xr = src.row(i);
        float* orow = space.src_mapped.data() + static_cast<size_t>(i) * d;
        for (int k = 0; k < d; ++k)
            simd::axpy(xr[k], q.data() + static_cast<size_t>(k) * d, orow, static_cast<size_t>(d));
    }
    normalize_rows(space.src_mapped, src.vocab_size, d);
    space.tgt_norm.assign(tgt.data.begin(), tgt.data.end());
    normalize_rows(space.tgt_norm, tgt.vocab_size, d);
    return space;
}

AlignedSpace align_spaces(const EmbeddingMatrix& src, const Vocabulary& src_vocab,
                          const EmbeddingMatrix& tgt, const Vocabulary& tgt_vocab,
                          const AlignConfig& cfg) {
    if (src.dim != tgt.dim) throw InvalidArgument("align_spaces: dimension mismatch");
    const int d = src.dim;

    TopBlock sb = top_block(src, cfg.topk);
    TopBlock tb = top_block(tgt, cfg.topk);
    if (sb.ids.empty() || tb.ids.empty())
        throw InvalidArgument("align_spaces: no usable vectors in one of the spaces");

    // initial Q from identical-string anchors when the policy allows
    std::vector<double> q(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) q[static_cast<size_t>(i) * d + i] = 1.0;
    bool flagged_degenerate = false;

    if (cfg.anchor_policy == AnchorPolicy::kIdenticalStrings) {
        std::unordered_map<std::string, int> tgt_pos;
        for (size_t r = 0; r < tb.ids.size(); ++r)
            tgt_pos.emplace(tgt_vocab.token(tb.ids[r]), static_cast<int>(r));
        std::vector<double> ax, ay;
        int anchors = 0;
        for (size_t r = 0; r < sb.ids.size(); ++r) {
            auto it = tgt_pos.find(src_vocab.token(sb.ids[r]));
            if (it == tgt_pos.end()) continue;
            const double* xs = sb.mat.data() + r * static_cast<size_t>(d);
            const double* yt = tb.mat.data() + static_cast<size_t>(it->second) * static_cast<size_t>(d);
            ax.insert(ax.end(), xs, xs + d);
            ay.insert(ay.end(), yt, yt + d);
            ++anchors;
        }
        if (anchors == 0)
            throw InvalidArgument(
                "align_spaces: no identical-string anchors available under the anchor policy");
        ProcrustesResult pr = orthogonal_procrustes(ax, ay, anchors, d);
        q = pr.q;
        flagged_degenerate = pr.degenerate;
        if (cfg.verbose)
            log_line("align", "anchor init with " + std::to_string(anchors) + " pairs");
    }

    AlignedSpace space;
    const int ns = static_cast<int>(sb.ids.size());
    const int nt = static_cast<int>(tb.ids.size());
    for (int round = 0; round < cfg.refine_iters; ++round) {
        std::vector<double> mapped = apply_q(sb.mat, ns, d, q);
        // cosine cost on normalized rows (Q preserves norms)
        std::vector<double> cost(static_cast<size_t>(ns) * static_cast<size_t>(nt));
        for (int i = 0; i < ns; ++i) {
            const double* xr = mapped.data() + static_cast<size_t>(i) * d;
            double* crow = cost.data() + static_cast<size_t>(i) * nt;
            for (int j = 0; j < nt; ++j)
                crow[j] = 1.0 - simd::dot(xr, tb.mat.data() + static_cast<size_t>(j) * d,
                                          static_cast<size_t>(d));
        }
        std::vector<int> match = sinkhorn_match(cost, ns, nt, cfg.sinkhorn_reg, cfg.sinkhorn_iters);
        double mean_cost = 0;
        std::vector<double> ys(static_cast<size_t>(ns) * static_cast<size_t>(d));
        for (int i = 0; i < ns; ++i) {
            mean_cost += cost[static_cast<size_t>(i) * nt + match[static_cast<size_t>(i)]];
            std::copy_n(tb.mat.data() + static_cast<size_t>(match[static_cast<size_t>(i)]) * d, d,
                        ys.data() + static_cast<size_t>(i) * d);
        }
        mean_cost /= ns;
        space.refine_objective.push_back(mean_cost);
        if (cfg.verbose)
            log_line("align", "round " + std::to_string(round + 1) + " mean matched distance " +
                                  format_double(mean_cost));
        ProcrustesResult pr = orthogonal_procrustes(sb.mat, ys, ns, d);
        q = pr.q;
        flagged_degenerate = flagged_degenerate || pr.degenerate;
    }

    std::vector<float> qf(q.size());
    for (size_t i = 0; i < q.size(); ++i) qf[i] = static_cast<float>(q[i]);
    AlignedSpace out = make_aligned_space(src, tgt, qf, flagged_degenerate);
    out.refine_objective = space.refine_objective;
    return out;
}

NeighborHit nearest_in_summary_space(const AlignedSpace& space, int src_word_id) {
    if (src_word_id < 0 || src_word_id >= space.src_vocab_size)
        throw InvalidArgument("nearest_in_summary_space: bad word id");
    const int d = space.dim;
    const float* xq = space.src_mapped.data() + static_cast<size_t>(src_word_id) * d;
    NeighborHit hit;
    float best = -2.0f;
    for (int j = 0; j < space.tgt_vocab_size; ++j) {
        float cosv = simd::dot(xq, space.tgt_norm.data() + static_cast<size_t>(j) * d,
                               static_cast<size_t>(d));
        if (cosv > best) {  // strict: ties keep the lower id
            best = cosv;
            hit.id = j;
        }
    }
    hit.distance = std::clamp(1.0f - best, 0.0f, 2.0f);
    return hit;
}

std::vector<NeighborHit> neighbor_map(const AlignedSpace& space, int threads) {
    std::vector<NeighborHit> map(static_cast<size_t>(space.src_vocab_size));
    auto work = [&](int begin, int end) {
        for (int i = begin; i < end; ++i)
            map[static_cast<size_t>(i)] = nearest_in_summary_space(space, i);
    };
    if (threads <= 1 || space.src_vocab_size < 256) {
        work(0, space.src_vocab_size);
        return map;
    }
    std::vector<std::thread> pool;
    int chunk = (space.src_vocab_size + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        int b = t * chunk, e = std::min(space.src_vocab_size, b + chunk);
        if (b >= e) break;
        pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
    return map;
}

void save_aligned_space(const AlignedSpace& space, const std::string& q_path) {
    std::ostringstream out;
    out << space.dim << ' ' << space.dim << '\n';
    char buf[64];
    for (int i = 0; i < space.dim; ++i) {
        out << 'q' << i;
        for (int j = 0; j < space.dim; ++j) {
            std::snprintf(buf, sizeof(buf), " %.8g",
                          static_cast<double>(space.q[static_cast<size_t>(i) * space.dim + j]));
            out << buf;
        }
        out << '\n';
    }
    write_file_atomic(q_path, out.str());
}

std::vector<float> load_q_matrix(const std::string& q_path, int expect_dim) {
    auto lines = read_lines(q_path);
    if (lines.empty()) throw IoError("empty Q file " + q_path);
    std::istringstream header(lines[0]);
    int r = 0, c = 0;
    if (!(header >> r >> c) || r != c || (expect_dim > 0 && r != expect_dim))
        throw IoError("bad Q header in " + q_path);
    std::vector<float> q(static_cast<size_t>(r) * static_cast<size_t>(r));
    int row = 0;
    for (size_t i = 1; i < lines.size() && row < r; ++i) {
        if (lines[i].empty()) continue;
        std::istringstream ss(lines[i]);
        std::string label;
        ss >> label;
        for (int j = 0; j < r; ++j)
            if (!(ss >> q[static_cast<size_t>(row) * r + j]))
                throw IoError("short Q row in " + q_path);
        ++row;
    }
    if (row != r) throw IoError("missing Q rows in " + q_path);
    return q;
}

}  // namespace btsumm

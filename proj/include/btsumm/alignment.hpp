#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "btsumm/embeddings.hpp"

namespace btsumm {

// SVD of a square matrix via one-sided Jacobi; A = U diag(S) V^T.
struct SvdResult {
    std::vector<double> u;  // d x d row-major
    std::vector<double> s;  // d, descending
    std::vector<double> v;  // d x d row-major
    int dim = 0;
};

SvdResult jacobi_svd(const std::vector<double>& a, int d);

struct ProcrustesResult {
    std::vector<double> q;  // d x d row-major, orthogonal
    int dim = 0;
    bool degenerate = false;  // rank-deficient cross-covariance
};

// argmin over orthogonal Q of ||X Q - Y||_F for paired rows X, Y (n x d).
ProcrustesResult orthogonal_procrustes(const std::vector<double>& x,
                                       const std::vector<double>& y, int n, int d);

enum class AnchorPolicy { kIdenticalStrings, kNone };

struct AlignConfig {
    AnchorPolicy anchor_policy = AnchorPolicy::kIdenticalStrings;
    int topk = 2000;          // most frequent words fed to correspondence estimation
    int refine_iters = 5;
    int sinkhorn_iters = 50;
    double sinkhorn_reg = 0.05;
    uint64_t seed = 1;
    bool verbose = false;
};

struct NeighborHit {
    int id = -1;
    float distance = 2.0f;  // 1 - cosine on unit-normalized vectors, in [0, 2]
};

// Orthogonal map from the full-text embedding space into the summary space,
// with unit-normalized matrices frozen for nearest-neighbor queries.
struct AlignedSpace {
    int dim = 0;
    std::vector<float> q;               // d x d row-major; maps row-vector x -> x Q
    std::vector<float> src_mapped;      // |V_src| x d, x Q rows, unit-normalized
    std::vector<float> tgt_norm;        // |V_tgt| x d, unit-normalized
    int src_vocab_size = 0;
    int tgt_vocab_size = 0;
    bool degenerate = false;
    std::vector<double> refine_objective;  // mean matched cosine distance per round
};

AlignedSpace align_spaces(const EmbeddingMatrix& src, const Vocabulary& src_vocab,
                          const EmbeddingMatrix& tgt, const Vocabulary& tgt_vocab,
                          const AlignConfig& cfg);

// Builds the query structures for an externally supplied Q (tests, reload).
AlignedSpace make_aligned_space(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt,
                                const std::vector<float>& q, bool degenerate);

// Closest summary-space word by cosine distance of the mapped source vector;
// ties break toward the lower target id. EOS handling is the caller's job.
NeighborHit nearest_in_summary_space(const AlignedSpace& space, int src_word_id);

// All-source-words neighbor map (shardable by rows).
std::vector<NeighborHit> neighbor_map(const AlignedSpace& space, int threads = 1);

void save_aligned_space(const AlignedSpace& space, const std::string& q_path);
std::vector<float> load_q_matrix(const std::string& q_path, int expect_dim);

// Entropy-regularized OT coupling hardened to row argmax. cost is n x m
// row-major; returns for each row the matched column.
std::vector<int> sinkhorn_match(const std::vector<double>& cost, int n, int m, double reg,
                                int iters);

}  // namespace btsumm

#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "had/checkpoint.hpp"
#include "had/errors.hpp"
#include "had/rng.hpp"
#include "had/tensor.hpp"

namespace had {

// Gated delta rule state update:
//
//   S_t = S_{t-1} (alpha_t (I - beta_t k_t k_t^T)) + beta_t v_t k_t^T
//   o_t = S_t q_t
//
// with S of shape (d_v, d_k), keys and queries l2-normalized upstream, and
// alpha_t, beta_t in (0,1) from per-step sigmoid gates. The normalized key
// keeps every eigenvalue of the transition operator inside the unit circle.
//
// Two evaluation paths are provided:
//   * gdn_forward_sequential — literal dense transcription, built from taped
//     primitives; the reference and oracle.
//   * gdn_forward_chunkwise — a fused scan that accumulates the composed
//     transition operator and write term per chunk (rank-1 updates inside the
//     chunk, one dense composition at each boundary) with a hand-written
//     adjoint that recomputes intra-chunk states from boundary checkpoints.
// chunk=1 degenerates to the sequential operation order.

template <typename T>
struct GdnStateT {
    TensorT<T> S;  // (d_v, d_k)
};

template <typename T>
struct GdnCellParamsT {
    TensorT<T> w_k;      // (d_model, d_k)
    TensorT<T> w_v;      // (d_model, d_v)
    TensorT<T> w_q;      // (d_model, d_k)
    TensorT<T> w_alpha;  // (d_model)
    TensorT<T> b_alpha;  // (1)
    TensorT<T> w_beta;   // (d_model)
    TensorT<T> b_beta;   // (1)
    int d_model = 0;
    int d_k = 0;
    int d_v = 0;

    static GdnCellParamsT create(ParamStore<T>& store, const std::string& prefix, int d_model,
                                 int d_k, int d_v, Rng& rng) {
        GdnCellParamsT p;
        p.d_model = d_model;
        p.d_k = d_k;
        p.d_v = d_v;
        const double ws = 1.0 / std::sqrt(static_cast<double>(d_model));
        p.w_k = store.create(prefix + ".w_k", {d_model, d_k}, rng, ws);
        p.w_v = store.create(prefix + ".w_v", {d_model, d_v}, rng, ws);
        p.w_q = store.create(prefix + ".w_q", {d_model, d_k}, rng, ws);
        p.w_alpha = store.create(prefix + ".w_alpha", {d_model}, rng, ws);
        // retention-biased at init: alpha ~ 0.88, beta ~ 0.5
        p.b_alpha = store.create_constant(prefix + ".b_alpha", {1}, T(2));
        p.w_beta = store.create(prefix + ".w_beta", {d_model}, rng, ws);
        p.b_beta = store.create_constant(prefix + ".b_beta", {1}, T(0));
        return p;
    }
};

using GdnState = GdnStateT<float>;
using GdnCellParams = GdnCellParamsT<float>;

// One delta-rule step from taped primitives. k and q are expected unit-norm.
template <typename T>
std::pair<TensorT<T>, TensorT<T>> gdn_step(const TensorT<T>& S, const TensorT<T>& k,
                                           const TensorT<T>& v, const TensorT<T>& q,
                                           const TensorT<T>& alpha, const TensorT<T>& beta) {
    const int d_v = S.dim(0);
    const int d_k = S.dim(1);
    if (k.numel() != static_cast<std::size_t>(d_k) || q.numel() != static_cast<std::size_t>(d_k) ||
        v.numel() != static_cast<std::size_t>(d_v)) {
        throw ShapeMismatch("gdn_step: S " + TensorT<T>::shape_str(S.shape()) + " vs k " +
                            TensorT<T>::shape_str(k.shape()) + ", v " +
                            TensorT<T>::shape_str(v.shape()));
    }
    auto k_col = reshape(k, {d_k, 1});
    auto k_row = reshape(k, {1, d_k});
    auto kk = matmul(k_col, k_row);                                    // (d_k, d_k)
    auto transition = mul_scalar(sub(TensorT<T>::eye(d_k), mul_scalar(kk, beta)), alpha);
    auto write = mul_scalar(matmul(reshape(v, {d_v, 1}), k_row), beta);  // (d_v, d_k)
    auto S_next = add(matmul(S, transition), write);
    auto o = reshape(matmul(S_next, reshape(q, {d_k, 1})), {d_v});
    return {S_next, o};
}

namespace gdn_detail {

template <typename T>
struct Projected {
    TensorT<T> K;      // (L, d_k), rows unit-norm
    TensorT<T> V;      // (L, d_v)
    TensorT<T> Q;      // (L, d_k), rows unit-norm
    TensorT<T> alpha;  // (L, 1)
    TensorT<T> beta;   // (L, 1)
};

template <typename T>
Projected<T> project_inputs(const TensorT<T>& x, const GdnCellParamsT<T>& p) {
    if (x.rank() != 2 || x.dim(1) != p.d_model) {
        throw ShapeMismatch("gdn: input " + TensorT<T>::shape_str(x.shape()) +
                            " does not match d_model=" + std::to_string(p.d_model));
    }
    Projected<T> out;
    out.K = l2_normalize_rows(matmul(x, p.w_k));
    out.V = matmul(x, p.w_v);
    out.Q = l2_normalize_rows(matmul(x, p.w_q));
    out.alpha = sigmoid(add_rows(matmul(x, reshape(p.w_alpha, {p.d_model, 1})), p.b_alpha));
    out.beta = sigmoid(add_rows(matmul(x, reshape(p.w_beta, {p.d_model, 1})), p.b_beta));
    return out;
}

template <typename T>
inline void matvec(const T* m, const T* x, T* y, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        y[i] = static_cast<T>(detail::dot(m + static_cast<std::size_t>(i) * cols, x,
                                          static_cast<std::size_t>(cols)));
    }
}

// y (cols) = M^T (cols x rows) * x (rows)
template <typename T>
inline void matvec_t(const T* m, const T* x, T* y, int rows, int cols) {
    std::vector<double> acc(static_cast<std::size_t>(cols), 0.0);
    for (int i = 0; i < rows; ++i) {
        const double xi = static_cast<double>(x[i]);
        if (xi == 0.0) continue;
        const T* row = m + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) acc[static_cast<std::size_t>(j)] += xi * static_cast<double>(row[j]);
    }
    for (int j = 0; j < cols; ++j) y[j] = static_cast<T>(acc[static_cast<std::size_t>(j)]);
}

}  // namespace gdn_detail

// Reference evaluation: Eq-literal dense transition per step, fully taped.
// O(L * d^3); used as the oracle and for gradient cross-checks.
template <typename T>
std::pair<TensorT<T>, TensorT<T>> gdn_forward_sequential(const TensorT<T>& x,
                                                         const GdnCellParamsT<T>& p,
                                                         const TensorT<T>& S0) {
    const int L = x.dim(0);
    if (L < 1) throw ShapeMismatch("gdn_forward_sequential: empty sequence");
    auto proj = gdn_detail::project_inputs(x, p);
    TensorT<T> S = S0;
    std::vector<TensorT<T>> rows;
    rows.reserve(static_cast<std::size_t>(L));
    for (int t = 0; t < L; ++t) {
        auto k = reshape(gather_rows(proj.K, {t}), {p.d_k});
        auto v = reshape(gather_rows(proj.V, {t}), {p.d_v});
        auto q = reshape(gather_rows(proj.Q, {t}), {p.d_k});
        auto a = reshape(gather_rows(proj.alpha, {t}), {1});
        auto b = reshape(gather_rows(proj.beta, {t}), {1});
        auto [S_next, o] = gdn_step(S, k, v, q, a, b);
        S = S_next;
        rows.push_back(reshape(o, {1, p.d_v}));
    }
    return {concat_rows(rows), S};
}

namespace gdn_detail {

// Fused chunkwise scan node. Inputs: K, V, Q (L x d), alpha, beta (L x 1),
// S0 (d_v x d_k). Output: O (L x d_v). Final state is exposed separately as a
// detached tensor (no model path consumes its gradient; windows restart from
// S0 = 0).
template <typename T>
struct ScanContext {
    std::shared_ptr<std::vector<T>> K, V, Q, alpha, beta, S0;
    int L = 0, d_k = 0, d_v = 0, chunk = 0;
    std::vector<std::vector<T>> chunk_start_states;  // one (d_v*d_k) matrix per chunk
    std::vector<T> final_state;
};

template <typename T>
void scan_forward(ScanContext<T>& ctx, std::vector<T>& O) {
    const int L = ctx.L, dk = ctx.d_k, dv = ctx.d_v, C = ctx.chunk;
    const T* K = ctx.K->data();
    const T* V = ctx.V->data();
    const T* Q = ctx.Q->data();
    const T* al = ctx.alpha->data();
    const T* be = ctx.beta->data();

    std::vector<T> S(*ctx.S0);
    std::vector<T> P(static_cast<std::size_t>(dk) * dk);
    std::vector<T> W(static_cast<std::size_t>(dv) * dk);
    std::vector<T> u(static_cast<std::size_t>(dk));
    std::vector<T> wu(static_cast<std::size_t>(dv));
    std::vector<T> r(static_cast<std::size_t>(dk));
    std::vector<T> s(static_cast<std::size_t>(dv));
    std::vector<T> S_next(static_cast<std::size_t>(dv) * dk);
    std::vector<T> mm_scratch;

    for (int c0 = 0; c0 < L; c0 += C) {
        const int chunk_len = std::min(C, L - c0);
        ctx.chunk_start_states.push_back(S);
        // P = I, W = 0
        std::fill(P.begin(), P.end(), T(0));
        for (int i = 0; i < dk; ++i) P[static_cast<std::size_t>(i) * dk + i] = T(1);
        std::fill(W.begin(), W.end(), T(0));

        for (int j = 0; j < chunk_len; ++j) {
            const int t = c0 + j;
            const T* k = K + static_cast<std::size_t>(t) * dk;
            const T* v = V + static_cast<std::size_t>(t) * dv;
            const T* q = Q + static_cast<std::size_t>(t) * dk;
            const T a = al[t];
            const T b = be[t];

            // P <- a (P - b (P k) k^T)
            matvec(P.data(), k, u.data(), dk, dk);
            for (int i = 0; i < dk; ++i) {
                T* prow = P.data() + static_cast<std::size_t>(i) * dk;
                const T ui = u[static_cast<std::size_t>(i)];
                for (int d = 0; d < dk; ++d) prow[d] = a * (prow[d] - b * (ui * k[d]));
            }
            // W <- a (W - b (W k) k^T) + b v k^T
            matvec(W.data(), k, wu.data(), dv, dk);
            for (int i = 0; i < dv; ++i) {
                T* wrow = W.data() + static_cast<std::size_t>(i) * dk;
                const T wi = wu[static_cast<std::size_t>(i)];
                const T vi = v[i];
                for (int d = 0; d < dk; ++d) {
                    wrow[d] = a * (wrow[d] - b * (wi * k[d])) + b * (vi * k[d]);
                }
            }

            T* orow = O.data() + static_cast<std::size_t>(t) * dv;
            if (j + 1 == chunk_len) {
                // boundary: materialize S and read from it (chunk=1 follows the
                // sequential operation order exactly)
                detail::dense_mm(S.data(), P.data(), S_next.data(), dv, dk, dk, mm_scratch);
                for (std::size_t i = 0; i < S_next.size(); ++i) S_next[i] += W[i];
                S.swap(S_next);
                matvec(S.data(), q, orow, dv, dk);
            } else {
                // o_t = S_c (P_t q) + W_t q
                matvec(P.data(), q, r.data(), dk, dk);
                matvec(W.data(), q, s.data(), dv, dk);
                for (int i = 0; i < dv; ++i) {
                    orow[i] = static_cast<T>(detail::dot(S.data() + static_cast<std::size_t>(i) * dk,
                                                         r.data(), static_cast<std::size_t>(dk))) +
                              s[static_cast<std::size_t>(i)];
                }
            }
        }
    }
    ctx.final_state = S;
}

// Adjoint of the scan. Recomputes intra-chunk states from the stored chunk
// boundaries (cheap rank-1 form), then walks each chunk backwards maintaining
// G = dL/dS_t. Everything reduces to matvecs against S and G:
//   dq_t    = S_t^T g_t
//   dv_t    = b (G k)
//   dk_t    = -a b (S^T (G k) + G^T (S k)) + b G^T v
//   dalpha  = <S, G>_F - b (S k).(G k)
//   dbeta   = v.(G k) - a (S k).(G k)
//   G      <- a (G - b (G k) k^T) + g_{t-1} q_{t-1}^T
template <typename T>
void scan_backward(const ScanContext<T>& ctx, const std::vector<T>& dO, std::vector<T>& dK,
                   std::vector<T>& dV, std::vector<T>& dQ, std::vector<T>& dalpha,
                   std::vector<T>& dbeta, std::vector<T>& dS0) {
    const int L = ctx.L, dk = ctx.d_k, dv = ctx.d_v, C = ctx.chunk;
    const T* K = ctx.K->data();
    const T* V = ctx.V->data();
    const T* Q = ctx.Q->data();
    const T* al = ctx.alpha->data();
    const T* be = ctx.beta->data();

    std::vector<T> G(static_cast<std::size_t>(dv) * dk, T(0));
    std::vector<std::vector<T>> states;  // S_local[0..chunk_len]
    std::vector<T> Gk(static_cast<std::size_t>(dv));
    std::vector<T> Sk(static_cast<std::size_t>(dv));
    std::vector<T> tmp_k(static_cast<std::size_t>(dk));
    std::vector<T> tmp_k2(static_cast<std::size_t>(dk));

    const int n_chunks = static_cast<int>(ctx.chunk_start_states.size());
    for (int ci = n_chunks - 1; ci >= 0; --ci) {
        const int c0 = ci * C;
        const int chunk_len = std::min(C, L - c0);
        // recompute states within the chunk
        states.assign(static_cast<std::size_t>(chunk_len) + 1, {});
        states[0] = ctx.chunk_start_states[static_cast<std::size_t>(ci)];
        for (int j = 0; j < chunk_len; ++j) {
            const int t = c0 + j;
            const T* k = K + static_cast<std::size_t>(t) * dk;
            const T* v = V + static_cast<std::size_t>(t) * dv;
            const T a = al[t];
            const T b = be[t];
            states[static_cast<std::size_t>(j) + 1] = states[static_cast<std::size_t>(j)];
            auto& S = states[static_cast<std::size_t>(j) + 1];
            matvec(S.data(), k, Sk.data(), dv, dk);
            for (int i = 0; i < dv; ++i) {
                T* srow = S.data() + static_cast<std::size_t>(i) * dk;
                const T si = Sk[static_cast<std::size_t>(i)];
                const T vi = v[i];
                for (int d = 0; d < dk; ++d) {
                    srow[d] = a * (srow[d] - b * (si * k[d])) + b * (vi * k[d]);
                }
            }
        }
        for (int j = chunk_len - 1; j >= 0; --j) {
            const int t = c0 + j;
            const T* k = K + static_cast<std::size_t>(t) * dk;
            const T* v = V + static_cast<std::size_t>(t) * dv;
            const T* q = Q + static_cast<std::size_t>(t) * dk;
            const T a = al[t];
            const T b = be[t];
            const T* g = dO.data() + static_cast<std::size_t>(t) * dv;
            const auto& S_prev = states[static_cast<std::size_t>(j)];
            const auto& S_cur = states[static_cast<std::size_t>(j) + 1];

            // G += g_t q_t^T
            for (int i = 0; i < dv; ++i) {
                T* grow = G.data() + static_cast<std::size_t>(i) * dk;
                const T gi = g[i];
                if (gi == T(0)) continue;
                for (int d = 0; d < dk; ++d) grow[d] += gi * q[d];
            }
            // dq_t = S_t^T g_t
            matvec_t(S_cur.data(), g, tmp_k.data(), dv, dk);
            T* dq = dQ.data() + static_cast<std::size_t>(t) * dk;
            for (int d = 0; d < dk; ++d) dq[d] += tmp_k[static_cast<std::size_t>(d)];

            matvec(G.data(), k, Gk.data(), dv, dk);
            matvec(S_prev.data(), k, Sk.data(), dv, dk);
            const double gsk = detail::dot(Sk.data(), Gk.data(), static_cast<std::size_t>(dv));
            const double trSG =
                detail::dot(S_prev.data(), G.data(), static_cast<std::size_t>(dv) * dk);
            dalpha[static_cast<std::size_t>(t)] +=
                static_cast<T>(trSG - static_cast<double>(b) * gsk);
            dbeta[static_cast<std::size_t>(t)] += static_cast<T>(
                detail::dot(v, Gk.data(), static_cast<std::size_t>(dv)) -
                static_cast<double>(a) * gsk);
            // dv_t = b (G k)
            T* dvp = dV.data() + static_cast<std::size_t>(t) * dv;
            for (int i = 0; i < dv; ++i) dvp[i] += b * Gk[static_cast<std::size_t>(i)];
            // dk_t
            matvec_t(S_prev.data(), Gk.data(), tmp_k.data(), dv, dk);   // S^T (G k)
            matvec_t(G.data(), Sk.data(), tmp_k2.data(), dv, dk);       // G^T (S k)
            T* dkp = dK.data() + static_cast<std::size_t>(t) * dk;
            const T nab = -a * b;
            for (int d = 0; d < dk; ++d) {
                dkp[d] += nab * (tmp_k[static_cast<std::size_t>(d)] + tmp_k2[static_cast<std::size_t>(d)]);
            }
            matvec_t(G.data(), v, tmp_k.data(), dv, dk);                // G^T v
            for (int d = 0; d < dk; ++d) dkp[d] += b * tmp_k[static_cast<std::size_t>(d)];
            // G <- a (G - b (G k) k^T)
            for (int i = 0; i < dv; ++i) {
                T* grow = G.data() + static_cast<std::size_t>(i) * dk;
                const T gi = Gk[static_cast<std::size_t>(i)];
                for (int d = 0; d < dk; ++d) grow[d] = a * (grow[d] - b * (gi * k[d]));
            }
        }
    }
    for (std::size_t i = 0; i < dS0.size(); ++i) dS0[i] += G[i];
}

}  // namespace gdn_detail

template <typename T>
struct GdnScanResult {
    TensorT<T> outputs;      // (L, d_v), differentiable
    TensorT<T> final_state;  // (d_v, d_k), detached
};

// Chunkwise evaluation of the recurrence; mathematically identical to
// gdn_forward_sequential.
template <typename T>
GdnScanResult<T> gdn_forward_chunkwise(const TensorT<T>& x, const GdnCellParamsT<T>& p,
                                       const TensorT<T>& S0, int chunk) {
    if (chunk < 1) throw ShapeMismatch("gdn_forward_chunkwise: chunk must be >= 1");
    const int L = x.dim(0);
    if (L < 1) throw ShapeMismatch("gdn_forward_chunkwise: empty sequence");
    if (S0.rank() != 2 || S0.dim(0) != p.d_v || S0.dim(1) != p.d_k) {
        throw ShapeMismatch("gdn_forward_chunkwise: S0 " + TensorT<T>::shape_str(S0.shape()) +
                            " vs (d_v,d_k)=(" + std::to_string(p.d_v) + "," +
                            std::to_string(p.d_k) + ")");
    }
    auto proj = gdn_detail::project_inputs(x, p);

    auto ctx = std::make_shared<gdn_detail::ScanContext<T>>();
    ctx->K = proj.K.node()->data;
    ctx->V = proj.V.node()->data;
    ctx->Q = proj.Q.node()->data;
    ctx->alpha = proj.alpha.node()->data;
    ctx->beta = proj.beta.node()->data;
    ctx->S0 = S0.node()->data;
    ctx->L = L;
    ctx->d_k = p.d_k;
    ctx->d_v = p.d_v;
    ctx->chunk = std::min(chunk, L);

    std::vector<T> O(static_cast<std::size_t>(L) * p.d_v);
    gdn_detail::scan_forward(*ctx, O);

    Node<T>* kn = proj.K.raw();
    Node<T>* vn = proj.V.raw();
    Node<T>* qn = proj.Q.raw();
    Node<T>* an = proj.alpha.raw();
    Node<T>* bn = proj.beta.raw();
    Node<T>* sn = S0.raw();
    const int dk = p.d_k, dv = p.d_v;
    auto outputs = detail::make_op<T>(
        {L, p.d_v}, std::move(O), {proj.K, proj.V, proj.Q, proj.alpha, proj.beta, S0},
        "gdn_scan", [ctx, kn, vn, qn, an, bn, sn, dk, dv](Node<T>& self) {
            const int L_ = ctx->L;
            std::vector<T> dKv(static_cast<std::size_t>(L_) * dk, T(0));
            std::vector<T> dVv(static_cast<std::size_t>(L_) * dv, T(0));
            std::vector<T> dQv(static_cast<std::size_t>(L_) * dk, T(0));
            std::vector<T> dav(static_cast<std::size_t>(L_), T(0));
            std::vector<T> dbv(static_cast<std::size_t>(L_), T(0));
            std::vector<T> dS0v(static_cast<std::size_t>(dv) * dk, T(0));
            gdn_detail::scan_backward(*ctx, self.grad, dKv, dVv, dQv, dav, dbv, dS0v);
            detail::accumulate(kn, dKv);
            detail::accumulate(vn, dVv);
            detail::accumulate(qn, dQv);
            detail::accumulate(an, dav);
            detail::accumulate(bn, dbv);
            detail::accumulate(sn, dS0v);
        });

    GdnScanResult<T> result;
    result.outputs = outputs;
    result.final_state = TensorT<T>::from_data({p.d_v, p.d_k}, ctx->final_state);
    return result;
}

// output = fwd(x) + reverse(rev(reverse(x))), elementwise sum of the two
// directions, each with its own parameters. S0 = 0 for both.
template <typename T>
TensorT<T> bidirectional_gdn(const TensorT<T>& x, const GdnCellParamsT<T>& fwd,
                             const GdnCellParamsT<T>& rev, int chunk) {
    const int L = x.dim(0);
    auto S0f = TensorT<T>::zeros({fwd.d_v, fwd.d_k});
    auto S0r = TensorT<T>::zeros({rev.d_v, rev.d_k});
    auto out_fwd = gdn_forward_chunkwise(x, fwd, S0f, chunk).outputs;
    std::vector<int> rev_idx(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) rev_idx[static_cast<std::size_t>(i)] = L - 1 - i;
    auto x_rev = gather_rows(x, rev_idx);
    auto out_rev = gdn_forward_chunkwise(x_rev, rev, S0r, chunk).outputs;
    return add(out_fwd, gather_rows(out_rev, rev_idx));
}

}  // namespace had

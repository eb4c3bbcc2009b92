#include "brainaug/signals.hpp"

#include "brainaug/io.hpp"
#include "brainaug/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace brainaug::signals {

namespace {

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (unsorted) and the orthogonal matrix of column
/// eigenvectors.
void jacobi_eigen(Matrix a, Vector& eigenvalues, Matrix& eigenvectors) {
    const Eigen::Index n = a.rows();
    eigenvectors = Matrix::Identity(n, n);
    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-24) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double api = a(p, i), aqi = a(q, i);
                    a(p, i) = c * api - s * aqi;
                    a(q, i) = s * api + c * aqi;
                }
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double vip = eigenvectors(i, p), viq = eigenvectors(i, q);
                    eigenvectors(i, p) = c * vip - s * viq;
                    eigenvectors(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    eigenvalues = a.diagonal();
}

}  // namespace

PcaModel fit_pca(const Matrix& data, int k) {
    const Eigen::Index n = data.rows();
    const Eigen::Index c = data.cols();
    if (n < 2) throw std::invalid_argument("fit_pca: need at least 2 rows");
    if (k < 1 || k > std::min<Eigen::Index>(n - 1, c))
        throw std::invalid_argument("fit_pca: k out of range");

    PcaModel model;
    model.mean = data.colwise().mean();
    Matrix centered = data.rowwise() - model.mean.transpose();
    Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    if (cov.trace() <= 1e-15) throw std::runtime_error("degenerate covariance");

    Vector eigenvalues;
    Matrix eigenvectors;
    jacobi_eigen(cov, eigenvalues, eigenvectors);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(c));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return eigenvalues(a) > eigenvalues(b);
    });

    model.components.resize(k, c);
    model.explained_variance.resize(k);
    for (int i = 0; i < k; ++i) {
        Vector comp = eigenvectors.col(order[static_cast<std::size_t>(i)]);
        // sign convention: largest-magnitude entry positive (first on ties)
        Eigen::Index arg = 0;
        comp.cwiseAbs().maxCoeff(&arg);
        if (comp(arg) < 0) comp = -comp;
        model.components.row(i) = comp.transpose();
        model.explained_variance(i) = std::max(0.0, eigenvalues(order[static_cast<std::size_t>(i)]));
    }
    return model;
}

Matrix apply_pca(const PcaModel& model, const Matrix& data) {
    if (data.cols() != model.mean.size())
        throw std::invalid_argument("apply_pca: dimension mismatch");
    return (data.rowwise() - model.mean.transpose()) * model.components.transpose();
}

std::vector<BrainWindow> synthesize_signals(const std::vector<corpus::QuerySample>& samples,
                                            const EmbedLookup& embed, int embed_dim, int c,
                                            double noise_sigma, double informativeness,
                                            [[maybe_unused]] int delay_frames, int t_frames,
                                            std::uint64_t seed) {
    if (t_frames < 1) throw std::invalid_argument("t_frames must be >= 1");
    if (noise_sigma < 0) throw std::invalid_argument("noise_sigma must be >= 0");

    Rng rng(seed);
    // One projection for the whole dataset. Entries are scaled so that the
    // projected semantic component has roughly unit variance for typical
    // mean-of-token embeddings; informativeness and noise_sigma then set the
    // signal-to-noise ratio directly.
    Matrix w_proj(c, embed_dim);
    const double scale = 4.0 / std::sqrt(static_cast<double>(embed_dim));
    for (Eigen::Index i = 0; i < w_proj.rows(); ++i)
        for (Eigen::Index j = 0; j < w_proj.cols(); ++j) w_proj(i, j) = scale * rng.normal();

    std::vector<BrainWindow> windows;
    windows.reserve(samples.size());
    for (const auto& s : samples) {
        Vector sem = Vector::Zero(embed_dim);
        int count = 0;
        for (const auto& tok : s.query) {
            sem += embed(tok);
            ++count;
        }
        for (const auto& tok : s.continuation) {
            sem += embed(tok);
            ++count;
        }
        if (count > 0) sem /= static_cast<double>(count);
        const Vector projected = w_proj * sem;

        BrainWindow w;
        w.sample_ref = s.sample_id;
        w.matrix.resize(t_frames, c);
        for (int f = 0; f < t_frames; ++f)
            for (int j = 0; j < c; ++j)
                w.matrix(f, j) = informativeness * projected(j) + rng.normal(0.0, noise_sigma);
        windows.push_back(std::move(w));
    }
    return windows;
}

BrainWindow cut_window(const SignalSession& session, int onset_frame, int delay_frames,
                       int t_frames) {
    const Eigen::Index begin = onset_frame + delay_frames;
    if (onset_frame < 0 || delay_frames < 0 || t_frames < 1 ||
        begin + t_frames > session.features.rows())
        throw std::out_of_range("window out of bounds");
    BrainWindow w;
    w.matrix = session.features.middleRows(begin, t_frames);
    w.sample_ref = session.session_id + ":" + std::to_string(onset_frame);
    return w;
}

std::vector<BrainWindow> shuffle_windows(const std::vector<BrainWindow>& windows,
                                         std::uint64_t seed) {
    const std::size_t n = windows.size();
    if (n < 2) throw std::invalid_argument("shuffle_windows: need at least 2 windows");

    Rng rng(seed);
    std::vector<std::size_t> perm(n);
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm);
        bool fixed_point = false;
        for (std::size_t i = 0; i < n; ++i)
            if (perm[i] == i) {
                fixed_point = true;
                break;
            }
        if (!fixed_point) break;
    }

    std::vector<BrainWindow> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].matrix = windows[perm[i]].matrix;
        out[i].sample_ref = windows[i].sample_ref;  // assignment moves, identity stays
    }
    return out;
}

EmbedLookup make_seeded_embedding(int dim, std::uint64_t seed) {
    auto cache = std::make_shared<std::map<std::string, Vector>>();
    return [dim, seed, cache](const std::string& token) -> Vector {
        auto it = cache->find(token);
        if (it != cache->end()) return it->second;
        Rng rng(seed ^ io::fnv1a64(token));
        Vector v(dim);
        for (int i = 0; i < dim; ++i) v(i) = rng.normal();
        (*cache)[token] = v;
        return v;
    };
}

}  // namespace brainaug::signals

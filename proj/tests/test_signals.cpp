#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "brainaug/corpus.hpp"
#include "brainaug/rng.hpp"
#include "brainaug/signals.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

using namespace brainaug;
using namespace brainaug::signals;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

std::vector<corpus::QuerySample> toy_samples(int n) {
    std::vector<corpus::QuerySample> samples;
    for (int i = 0; i < n; ++i) {
        corpus::QuerySample s;
        s.sample_id = "s" + std::to_string(i);
        s.brain_ref = s.sample_id;
        s.query = {"q" + std::to_string(i % 7)};
        s.continuation = {"c" + std::to_string(i % 5)};
        s.relevant_doc = "d0";
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace

TEST_CASE("pca on collinear 2-d points") {
    Matrix data(6, 2);
    for (int i = 0; i < 6; ++i) {
        data(i, 0) = i - 2.5;
        data(i, 1) = 2.0 * (i - 2.5);
    }
    const PcaModel model = fit_pca(data, 2);
    const double inv_sqrt5 = 1.0 / std::sqrt(5.0);
    CHECK(std::abs(std::abs(model.components(0, 0)) - inv_sqrt5) < 1e-9);
    CHECK(std::abs(std::abs(model.components(0, 1)) - 2.0 * inv_sqrt5) < 1e-9);
    CHECK(model.components(0, 1) > 0);  // sign convention
    CHECK(model.explained_variance(1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("pca full-rank round trip") {
    const Matrix data = random_matrix(20, 5, 11);
    const PcaModel model = fit_pca(data, 5);
    const Matrix projected = apply_pca(model, data);
    const Matrix rebuilt = (projected * model.components).rowwise() + model.mean.transpose();
    CHECK((rebuilt - data).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("pca eigenvalues match a dense eigensolver") {
    const Matrix data = random_matrix(50, 8, 23);
    const PcaModel model = fit_pca(data, 8);

    // independent oracle: Eigen's self-adjoint eigendecomposition
    const Matrix centered = data.rowwise() - data.colwise().mean();
    const Matrix cov = centered.transpose() * centered / (data.rows() - 1.0);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    Vector expected = solver.eigenvalues().reverse();
    for (int i = 0; i < 8; ++i)
        CHECK(model.explained_variance(i) == doctest::Approx(expected(i)).epsilon(1e-6));

    // orthonormality within 1e-8
    const Matrix gram = model.components * model.components.transpose();
    CHECK((gram - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-8);

    // total explained variance cannot exceed total variance
    CHECK(model.explained_variance.sum() <= cov.trace() + 1e-9);
}

TEST_CASE("pca projection properties") {
    const Matrix data = random_matrix(30, 6, 5);
    const PcaModel model = fit_pca(data, 6);

    Matrix mean_row = model.mean.transpose();
    CHECK(apply_pca(model, mean_row).cwiseAbs().maxCoeff() < 1e-12);

    // distances preserved at full rank
    const Matrix proj = apply_pca(model, data);
    for (int i = 0; i < 5; ++i)
        for (int j = i + 1; j < 5; ++j) {
            const double orig = (data.row(i) - data.row(j)).norm();
            const double now = (proj.row(i) - proj.row(j)).norm();
            CHECK(now == doctest::Approx(orig).epsilon(1e-9));
        }

    // projected column variances equal the explained variances
    const Matrix centered_proj = proj.rowwise() - proj.colwise().mean();
    for (int c = 0; c < 6; ++c) {
        const double var = centered_proj.col(c).squaredNorm() / (proj.rows() - 1.0);
        CHECK(var == doctest::Approx(model.explained_variance(c)).epsilon(1e-6));
    }

    CHECK_THROWS(apply_pca(model, random_matrix(3, 4, 1)));
}

TEST_CASE("pca rejects degenerate input") {
    CHECK_THROWS(fit_pca(random_matrix(1, 4, 2), 1));
    CHECK_THROWS(fit_pca(random_matrix(10, 4, 3), 5));
    CHECK_THROWS(fit_pca(random_matrix(10, 4, 3), 0));
    Matrix constant = Matrix::Ones(10, 3);
    CHECK_THROWS_WITH(fit_pca(constant, 2), "degenerate covariance");
}

TEST_CASE("synthetic signals determinism and semantics") {
    const auto samples = toy_samples(10);
    const auto embed = make_seeded_embedding(8, 99);

    const auto w1 = synthesize_signals(samples, embed, 8, 6, 0.3, 0.8, 2, 4, 77);
    const auto w2 = synthesize_signals(samples, embed, 8, 6, 0.3, 0.8, 2, 4, 77);
    REQUIRE(w1.size() == samples.size());
    for (std::size_t i = 0; i < w1.size(); ++i) {
        CHECK(w1[i].sample_ref == samples[i].sample_id);
        CHECK(w1[i].matrix == w2[i].matrix);  // bitwise
        CHECK(w1[i].t_frames() == 4);
        CHECK(w1[i].feat_dim() == 6);
    }

    // noiseless, fully informative: identical semantics give identical windows
    auto pair = toy_samples(2);
    pair[1].query = pair[0].query;
    pair[1].continuation = pair[0].continuation;
    const auto w3 = synthesize_signals(pair, embed, 8, 6, 0.0, 1.0, 2, 4, 5);
    CHECK((w3[0].matrix - w3[1].matrix).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("zero informativeness decorrelates windows from semantics") {
    const auto samples = toy_samples(200);
    const auto embed = make_seeded_embedding(8, 99);
    // identical seeds align the projection and the noise stream, so the
    // noise-only and semantics-only runs are directly comparable
    const auto noise = synthesize_signals(samples, embed, 8, 6, 1.0, 0.0, 2, 4, 123);
    const auto pure = synthesize_signals(samples, embed, 8, 6, 0.0, 1.0, 2, 4, 123);

    double mean_corr = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Eigen::Map<const Vector> a(noise[i].matrix.data(), noise[i].matrix.size());
        Eigen::Map<const Vector> b(pure[i].matrix.data(), pure[i].matrix.size());
        const Vector ac = a.array() - a.mean();
        const Vector bc = b.array() - b.mean();
        mean_corr += ac.dot(bc) / (ac.norm() * bc.norm());
    }
    mean_corr /= static_cast<double>(samples.size());
    CHECK(std::abs(mean_corr) < 0.1);
}

TEST_CASE("window cutting") {
    SignalSession session;
    session.session_id = "s";
    session.features = random_matrix(10, 3, 4);

    const BrainWindow w = cut_window(session, 0, 2, 4);
    CHECK(w.matrix == session.features.middleRows(2, 4));

    CHECK_THROWS_WITH(cut_window(session, 9, 2, 4), "window out of bounds");

    // consecutive unit windows tile the session
    for (int onset = 0; onset < 10; ++onset) {
        const BrainWindow u = cut_window(session, onset, 0, 1);
        CHECK(u.matrix == session.features.middleRows(onset, 1));
    }
}

TEST_CASE("window shuffling prefers derangements") {
    const auto samples = toy_samples(2);
    const auto embed = make_seeded_embedding(4, 1);
    const auto windows = synthesize_signals(samples, embed, 4, 3, 0.5, 0.5, 2, 2, 9);

    const auto swapped = shuffle_windows(windows, 3);
    CHECK(swapped[0].matrix == windows[1].matrix);
    CHECK(swapped[1].matrix == windows[0].matrix);
    CHECK(swapped[0].sample_ref == windows[0].sample_ref);  // identity stays with the slot

    const auto many = synthesize_signals(toy_samples(20), embed, 4, 3, 0.5, 0.5, 2, 2, 9);
    const auto shuffled = shuffle_windows(many, 4);
    const auto shuffled2 = shuffle_windows(many, 4);
    int fixed = 0;
    for (std::size_t i = 0; i < many.size(); ++i) {
        if (shuffled[i].matrix == many[i].matrix) ++fixed;
        CHECK(shuffled[i].matrix == shuffled2[i].matrix);  // determinism
    }
    CHECK(fixed == 0);

    // the multiset of windows is preserved: match each shuffled row set
    std::vector<bool> used(many.size(), false);
    for (const auto& w : shuffled) {
        bool found = false;
        for (std::size_t j = 0; j < many.size(); ++j) {
            if (!used[j] && w.matrix == many[j].matrix) {
                used[j] = true;
                found = true;
                break;
            }
        }
        CHECK(found);
    }

    CHECK_THROWS(shuffle_windows({windows[0]}, 1));
}

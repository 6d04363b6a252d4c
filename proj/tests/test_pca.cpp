#include "checks.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace tspca;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

EigenPair pair_of(std::initializer_list<double> u) {
    EigenPair p;
    p.vector = Eigen::VectorXd(static_cast<Eigen::Index>(u.size()));
    Eigen::Index k = 0;
    for (double v : u) p.vector(k++) = v;
    p.vector.normalize();
    p.value = 1.0;
    return p;
}

std::vector<std::string> ids(std::size_t m) {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < m; ++k) out.push_back("p" + std::to_string(k));
    return out;
}

} // namespace

TEST_CASE("Gram accumulation equals direct arithmetic", "[pca][oracle]") {
    const auto r = testing::gram_vs_direct();
    INFO(r.detail);
    CHECK(r.pass);
}

TEST_CASE("Gram matrix is exactly symmetric and rejects ragged input", "[pca]") {
    std::vector<Eigen::MatrixXd> s{Eigen::MatrixXd::Random(3, 7), Eigen::MatrixXd::Random(3, 7)};
    const auto g = gram(s);
    CHECK((g.matrix.array() == g.matrix.transpose().array()).all());
    s.push_back(Eigen::MatrixXd::Random(3, 6));
    CHECK_THROWS_AS(gram(s), std::invalid_argument);
    CHECK_THROWS_AS(gram(std::vector<Eigen::MatrixXd>{}), std::invalid_argument);
}

TEST_CASE("power iteration agrees with a Jacobi eigensolver", "[pca][oracle]") {
    const auto r = testing::power_iteration_vs_dense();
    INFO(r.detail);
    CHECK(r.pass);
}

TEST_CASE("dense decomposition agrees with Jacobi rotations", "[pca][oracle]") {
    Eigen::MatrixXd b = Eigen::MatrixXd::Random(12, 12);
    const GramMatrix g{b * b.transpose()};
    const auto d = full_eigendecomposition(g);
    const auto ref = testing::jacobi_eigen(g.matrix);
    for (Eigen::Index k = 0; k < 12; ++k) {
        CHECK_THAT(d.values(k), WithinAbs(ref.values(k), 1e-10 * ref.values(0)));
        CHECK(std::abs(std::abs(d.vectors.col(k).dot(ref.vectors.col(k))) - 1.0) <= 1e-8);
    }
    for (Eigen::Index k = 1; k < 12; ++k) CHECK(d.values(k) <= d.values(k - 1));
    CHECK_THROWS_AS(full_eigendecomposition(g, 10), std::invalid_argument);
}

TEST_CASE("principal components preserve length", "[pca]") {
    Eigen::MatrixXd b = Eigen::MatrixXd::Random(6, 6);
    const auto d = full_eigendecomposition(GramMatrix{b * b.transpose()});
    const Eigen::VectorXd dp = Eigen::VectorXd::Random(6);
    const auto rho = principal_components(d, dp);
    CHECK_THAT(rho.norm(), WithinRel(dp.norm(), 1e-12));
    CHECK_THAT((d.vectors * rho - dp).norm(), WithinAbs(0.0, 1e-12));
}

TEST_CASE("power iteration on a known spectrum", "[pca]") {
    GramMatrix g{Eigen::Vector3d(1.0, 4.0, 2.0).asDiagonal()};
    const auto p = power_iteration(g);
    CHECK(p.converged);
    CHECK_THAT(p.value, WithinRel(4.0, 1e-12));
    CHECK_THAT(p.vector(1), WithinRel(1.0, 1e-9));
    CHECK(p.residual <= 1e-10 * 4.0);
    CHECK_THROWS_AS(power_iteration(GramMatrix{Eigen::MatrixXd::Zero(3, 3)}), std::invalid_argument);
}

TEST_CASE("eigenvector sign makes the largest component positive", "[pca]") {
    Eigen::Matrix2d m;
    m << 1.0, -0.9, -0.9, 1.0;
    const auto p = dominant_eigenpair(GramMatrix{m});
    Eigen::Index arg = 0;
    p.vector.cwiseAbs().maxCoeff(&arg);
    CHECK(p.vector(arg) > 0.0);
}

TEST_CASE("repeated dominant eigenvalue falls back to the dense solver", "[pca]") {
    GramMatrix g{Eigen::Vector4d(3.0, 3.0, 1.0, 0.5).asDiagonal()};
    g.matrix(0, 1) = g.matrix(1, 0) = 1e-13;
    const auto p = dominant_eigenpair(g, 1e-14, 50);
    CHECK(p.converged);
    CHECK_THAT(p.value, WithinRel(3.0, 1e-9));
}

TEST_CASE("ranking selects the shortest prefix reaching the threshold", "[pca]") {
    const auto pair = pair_of({0.1, 0.7, 0.5, 0.5, 0.0});
    const auto r = rank_parameters(pair, ids(5), 0.6);
    REQUIRE(r.entries.size() == 5);
    CHECK(r.entries[0].id == "p1");
    // Equal shares keep index order.
    CHECK(r.entries[1].id == "p2");
    CHECK(r.entries[2].id == "p3");
    CHECK(r.entries[4].id == "p4");
    CHECK(r.selected == std::vector<std::size_t>{1, 2});
    CHECK(r.entries[1].selected);
    CHECK_FALSE(r.entries[2].selected);
    const auto mask = r.frozen_mask(5);
    CHECK(mask == std::vector<bool>{true, false, false, true, true});
}

TEST_CASE("threshold extremes", "[pca]") {
    const auto pair = pair_of({0.1, 0.7, 0.5, 0.5, 0.0});
    CHECK(rank_parameters(pair, ids(5), 1.0).selected.size() == 5);
    CHECK(rank_parameters(pair, ids(5), 0.0001).selected.size() == 1);
    CHECK_THROWS_AS(rank_parameters(pair, ids(5), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(rank_parameters(pair, ids(5), 1.5), std::invalid_argument);
    CHECK_THROWS_AS(rank_parameters(pair, ids(4), 0.5), std::invalid_argument);
}

TEST_CASE("Case I ranking: shares, PSD Gram and expected parameters", "[pca]") {
    const auto a = testing::analyse(testing::case_one, testing::case_one.threshold);
    const auto shares = testing::shares_sum_to_one(a);
    INFO(shares.detail);
    CHECK(shares.pass);
    const auto psd = testing::gram_psd(a);
    INFO(psd.detail);
    CHECK(psd.pass);
    CHECK(a.pair.converged);
    std::set<std::string> selected;
    for (auto k : a.ranking.selected) selected.insert(a.lambda.label(k));
    CHECK(selected.count("P_L3") == 1);
    bool lines_12_or_15 = false;
    for (const auto& id : selected) lines_12_or_15 = lines_12_or_15 || id.ends_with("_1-2") || id.ends_with("_1-5");
    CHECK(lines_12_or_15);
}

TEST_CASE("Hessian of the sampled loss is twice the Gram matrix", "[pca][oracle]") {
    const auto r = testing::hessian_vs_gram();
    INFO(r.detail);
    CHECK(r.pass);
}

TEST_CASE("loss along the dominant direction follows the quadratic model", "[pca]") {
    const auto a = testing::analyse(testing::case_one, testing::case_one.threshold);
    const auto& sys = testing::ieee14();
    const auto sc = testing::scenario(testing::case_one);
    const auto nominal = fault_on_samples(sys, a.lambda, sc, a.series.horizon, a.series.matrices.size());
    auto ratio = [&](double eps) {
        auto p = a.lambda;
        for (std::size_t k = 0; k < p.size(); ++k) p[k] *= std::exp(eps * a.pair.vector(static_cast<Eigen::Index>(k)));
        const auto moved = fault_on_samples(sys, p, sc, a.series.horizon, a.series.matrices.size());
        return loss(moved, nominal) / (eps * eps * a.pair.value);
    };
    const double coarse = ratio(1e-2);
    const double fine = ratio(1e-3);
    INFO("ratio at 1e-2: " << coarse << ", at 1e-3: " << fine);
    CHECK(std::abs(fine - 1.0) <= 0.2);
    CHECK(std::abs(fine - 1.0) <= std::abs(coarse - 1.0));
}

#include "doctest.h"
#include "oracle.hpp"

#include "stfseb/kernel.hpp"

using namespace stfseb;

TEST_CASE("build_kernel equals explicit dot products") {
    Rng rng(2);
    Matrix h(4, 3);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 3; ++j) h(i, j) = rng.normal();
    const KernelConfig cfg{0.7, 0.2};
    const SymMatrix k = build_kernel(h, cfg);
    REQUIRE(k.dim() == 4);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) {
            double dot = 0.0;
            for (Eigen::Index c = 0; c < 3; ++c) dot += h(i, c) * h(j, c);
            const double want = 0.7 * dot + (i == j ? 0.2 : 0.0);
            CHECK(std::fabs(k(i, j) - want) < 1e-14);
            CHECK(k(i, j) == k(j, i));
        }
}

TEST_CASE("zero features give tau2 times identity") {
    const SymMatrix k = build_kernel(Matrix::Zero(3, 5), {2.0, 1.0});
    CHECK(k.entries().isApprox(Matrix::Identity(3, 3)));
}

TEST_CASE("kernel config validation") {
    CHECK_THROWS(KernelConfig{0.0, 1.0}.validate());
    CHECK_THROWS(KernelConfig{1.0, -1.0}.validate());
    CHECK_NOTHROW(KernelConfig{1e-6, 1e2}.validate());
}

TEST_CASE("mahalanobis_sq matches an explicit inverse") {
    Rng rng(4);
    Matrix a(5, 5);
    for (Eigen::Index i = 0; i < 5; ++i)
        for (Eigen::Index j = 0; j < 5; ++j) a(i, j) = rng.normal();
    Matrix s = a * a.transpose();
    s = 0.5 * (s + s.transpose()).eval();
    s.diagonal().array() += 0.5;
    Vector v(5);
    oracle::Mat sm(5, oracle::Vec(5));
    oracle::Vec vv(5);
    for (int i = 0; i < 5; ++i) {
        v(i) = rng.normal();
        vv[static_cast<std::size_t>(i)] = v(i);
        for (int j = 0; j < 5; ++j) sm[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = s(i, j);
    }
    const double want = oracle::quad_form(vv, oracle::inverse(sm));
    CHECK(std::fabs(mahalanobis_sq(v, cholesky(SymMatrix(s))) - want) < 1e-9 * std::max(1.0, want));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

#include "eqr/convolution.hpp"
#include "eqr/error.hpp"
#include "eqr/fidelity.hpp"
#include "eqr/image.hpp"
#include "eqr/rng.hpp"

using namespace eqr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ErrorKind kind_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an eqr::Error");
    return ErrorKind::Numeric;
}

Image uniform_image(Shape s, std::uint64_t seed, double lo = 0.0, double hi = 1.0)
{
    Rng rng(seed);
    Image img = Image::zeros(s);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform(lo, hi);
    return img;
}

VectorXd to_vec(const Image& x) { return Eigen::Map<const VectorXd>(x.values().data(), Eigen::Index(x.size())); }

// Blur then keep rows and columns 0, s, 2s, ... as an explicit matrix.
MatrixXd sr_matrix(const Image& k, int n, int s)
{
    const int m = n / s;
    MatrixXd a = MatrixXd::Zero(m * m, n * n);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c)
            for (int i = 0; i < k.height(); ++i)
                for (int j = 0; j < k.width(); ++j) {
                    const int rr = ((r * s - (i - k.height() / 2)) % n + n) % n;
                    const int cc = ((c * s - (j - k.width() / 2)) % n + n) % n;
                    a(r * m + c, rr * n + cc) += k.at(i, j);
                }
    return a;
}

Image fd_gradient(const std::function<double(const Image&)>& f, const Image& x, double h)
{
    Image g = Image::zeros_like(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        Image a = x, b = x;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(a) - f(b)) / (2 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("gaussian data term examples")
{
    Fidelity f = Fidelity::gaussian(LinearOperator::identity(), 1.0);
    Image x = uniform_image({4, 4, 1}, 1);
    CHECK(f.value(x, x) == 0.0);

    Image e1 = Image::zeros({4, 4, 1});
    e1[0] = 1.0;
    Image zero = Image::zeros({4, 4, 1});
    CHECK(f.value(e1, zero) == 0.5);
    CHECK(f.gradient(x, zero) == x);

    Fidelity w = Fidelity::gaussian(LinearOperator::identity(), 0.1, 0.5);
    CHECK(w.value(e1, zero) == doctest::Approx(0.5 / 0.25).epsilon(1e-15));
    CHECK(w.weight_sigma() == 0.5);
    CHECK(Fidelity::gaussian(LinearOperator::identity(), 0.1).weight_sigma() == 0.1);
}

TEST_CASE("speckle data term examples")
{
    Fidelity f = Fidelity::speckle(1.0);
    Image y = uniform_image({3, 3, 1}, 2, 0.1, 1.0);
    double expected = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) expected += std::log(y[i]) + 1.0;
    CHECK(f.value(y, y) == doctest::Approx(expected).epsilon(1e-14));

    Fidelity g = Fidelity::speckle(50.0, 1e-3);
    Image x = uniform_image({3, 3, 1}, 3, 0.2, 0.9);
    Image grad = g.gradient(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(grad[i] == doctest::Approx(50.0 * (1.0 / x[i] - y[i] / (x[i] * x[i]))).epsilon(1e-14));
    }
    const Image fd = fd_gradient([&](const Image& v) { return g.value(v, y); }, x, 1e-7);
    CHECK(norm(fd - grad) / norm(grad) < 1e-5);

    Image below = x;
    below[4] = 5e-4;
    CHECK(kind_of([&] { (void)g.value(below, y); }) == ErrorKind::Domain);
    CHECK(kind_of([&] { (void)g.gradient(below, y); }) == ErrorKind::Domain);
    CHECK(kind_of([&] { (void)g.lipschitz({3, 3, 1}); }) == ErrorKind::Unsupported);
}

TEST_CASE("gaussian gradient against finite differences")
{
    const Image k = gaussian_kernel(1.2, 5);
    for (int s : {1, 2}) {
        Fidelity f = Fidelity::gaussian(LinearOperator::blur(k, s), 0.05, 0.3);
        Image x = uniform_image({8, 8, 2}, 4);
        Image y = uniform_image(f.observation_shape(x.shape()), 5);
        const Image g = f.gradient(x, y);
        const Image fd = fd_gradient([&](const Image& v) { return f.value(v, y); }, x, 1e-6);
        CHECK(norm(fd - g) / norm(g) < 1e-5);
        CHECK(f.value(x, y) >= 0.0);
    }
}

TEST_CASE("blur adjoint")
{
    Rng rng(6);
    for (const auto& k : {gaussian_kernel(2.0, 25), motion_kernel(9, 45), kernel_from_spec("box:3")}) {
        for (int s : {1, 2}) {
            LinearOperator a = LinearOperator::blur(k, s);
            const Shape in{16, 16, 1};
            Image x = rng.normal_image(in);
            Image v = rng.normal_image(a.output_shape(in));
            const double lhs = dot(a.apply(x), v);
            const double rhs = dot(x, a.adjoint(v, in));
            CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
        }
    }
}

TEST_CASE("observations")
{
    Image x = uniform_image({8, 8, 1}, 7);
    const Image k = kernel_from_spec("gaussian:1");
    Fidelity clean = Fidelity::gaussian(LinearOperator::blur(k), 0.0, 1.0);
    Rng rng(8);
    CHECK(clean.observe(x, rng) == conv2d_circular(x, k));

    Fidelity noisy = Fidelity::gaussian(LinearOperator::blur(k), 0.1);
    Rng r1(9), r2(9);
    CHECK(noisy.observe(x, r1) == noisy.observe(x, r2));

    // Stride 2, offset 0.
    LinearOperator sr = LinearOperator::blur(k, 2);
    Image low = sr.apply(x);
    REQUIRE(low.shape() == Shape{4, 4, 1});
    const Image full = conv2d_circular(x, k);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) CHECK(low.at(r, c) == full.at(2 * r, 2 * c));
}

TEST_CASE("speckle draws have unit mean")
{
    Fidelity f = Fidelity::speckle(50.0);
    const Image one = Image::constant({1000, 1000, 1}, 1.0);
    Rng rng(10);
    const Image y = f.observe(one, rng);
    const double mean = sum(y) / double(y.size());
    CHECK(mean >= 0.997);
    CHECK(mean <= 1.003);
    // Var Gamma(L, 1/L) = 1/L.
    double var = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) var += (y[i] - mean) * (y[i] - mean);
    var /= double(y.size());
    CHECK(var == doctest::Approx(1.0 / 50.0).epsilon(0.01));
}

TEST_CASE("super-resolution operator")
{
    const Image dirac = dirac_kernel();
    LinearOperator id = super_resolution_operator(dirac, 1);
    Image x = uniform_image({6, 6, 3}, 11);
    CHECK(id.apply(x) == x);
    CHECK(id.adjoint(x, x.shape()) == x);

    const Image k = kernel_from_spec("gaussian:1.6");
    LinearOperator a = super_resolution_operator(k, 2);
    Image flat = Image::constant({8, 8, 1}, 0.3);
    CHECK(max_abs_difference(a.apply(flat), Image::constant({4, 4, 1}, 0.3)) < 1e-14);

    // Explicit matrix at d = 64.
    Image k3 = uniform_image({3, 3, 1}, 12);
    LinearOperator a3 = super_resolution_operator(k3, 2);
    const MatrixXd m = sr_matrix(k3, 8, 2);
    Image z = uniform_image({8, 8, 1}, 13);
    CHECK((to_vec(a3.apply(z)) - m * to_vec(z)).cwiseAbs().maxCoeff() < 1e-12);
    Image v = uniform_image({4, 4, 1}, 14);
    CHECK((to_vec(a3.adjoint(v, z.shape())) - m.transpose() * to_vec(v)).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m.transpose() * m);
    CHECK(a3.normal_norm({8, 8, 1}) == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-10));

    CHECK(kind_of([&] { (void)a.apply(Image(7, 8)); }) == ErrorKind::Config);
    CHECK(kind_of([&] { (void)LinearOperator::blur(k, 0); }) == ErrorKind::Config);
}

TEST_CASE("dense operators")
{
    Rng rng(15);
    Image mat = rng.normal_image({5, 6, 1});
    LinearOperator a = LinearOperator::dense(mat, {6, 1, 1}, {5, 1, 1});
    Image x = rng.normal_image({6, 1, 1});
    Image v = rng.normal_image({5, 1, 1});
    CHECK(std::abs(dot(a.apply(x), v) - dot(x, a.adjoint(v, {6, 1, 1}))) < 1e-12);
    MatrixXd m(5, 6);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 6; ++c) m(r, c) = mat.at(r, c);
    Eigen::JacobiSVD<MatrixXd> svd(m);
    CHECK(a.normal_norm({6, 1, 1}) == doctest::Approx(svd.singularValues()(0) * svd.singularValues()(0)).epsilon(1e-10));
    CHECK(kind_of([&] { (void)a.apply(Image::vector({1, 2})); }) == ErrorKind::Dimension);
    CHECK(kind_of([&] { (void)LinearOperator::dense(mat, {5, 1, 1}, {5, 1, 1}); }) == ErrorKind::Dimension);
}

TEST_CASE("lipschitz certificate of the gaussian data term")
{
    const Shape in{16, 16, 1};
    for (const auto& k : {gaussian_kernel(1.0, 25), motion_kernel(5, 0), kernel_from_spec("box:3")}) {
        for (int s : {1, 2}) {
            Fidelity f = Fidelity::gaussian(LinearOperator::blur(k, s), 0.05, 0.2);
            const double lf = f.lipschitz(in);
            // lambda_max(A^T A) from the spectrum, aliasing included, by brute
            // force on the dense normal matrix.
            MatrixXd a(Eigen::Index(f.observation_shape(in).size()), Eigen::Index(in.size()));
            for (std::size_t j = 0; j < in.size(); ++j) {
                Image e = Image::zeros(in);
                e[j] = 1.0;
                a.col(Eigen::Index(j)) = to_vec(f.op().apply(e));
            }
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(a.transpose() * a);
            CHECK(lf == doctest::Approx(es.eigenvalues().maxCoeff() / 0.04).epsilon(1e-10));

            Rng rng(16);
            const Image y = rng.normal_image(f.observation_shape(in));
            double worst = 0.0;
            for (int t = 0; t < 1000; ++t) {
                const Image p = rng.normal_image(in), q = rng.normal_image(in);
                worst = std::max(worst, norm(f.gradient(p, y) - f.gradient(q, y)) / norm(p - q));
            }
            CHECK(worst <= lf + 1e-8);
        }
    }
}

TEST_CASE("kernels")
{
    const Image g = gaussian_kernel(2.0);
    CHECK(g.height() == 25);
    CHECK(sum(g) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(g == flip_kernel(g));
    for (double angle : {0.0, 45.0}) {
        const Image m = motion_kernel(9, angle);
        CHECK(m.height() % 2 == 1);
        CHECK(sum(m) == doctest::Approx(1.0).epsilon(1e-14));
    }
    // A horizontal segment has all its mass on the middle row.
    const Image h = motion_kernel(5, 0);
    double middle = 0.0;
    for (int c = 0; c < h.width(); ++c) middle += h.at(h.height() / 2, c);
    CHECK(middle == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(kernel_from_spec("dirac") == dirac_kernel());
    CHECK(kernel_from_spec("gaussian:2") == gaussian_kernel(2.0));
    CHECK(kind_of([] { (void)kernel_from_spec("gauss:2"); }) == ErrorKind::Config);
    CHECK(kind_of([] { (void)kernel_from_spec("box:4"); }) == ErrorKind::Config);
    CHECK(kind_of([] { (void)kernel_from_spec("gaussian:x"); }) == ErrorKind::Config);
}

TEST_CASE("default initialization")
{
    Image x = uniform_image({8, 8, 1}, 17);
    const Image k = gaussian_kernel(1.0, 5);
    Fidelity blur = Fidelity::gaussian(LinearOperator::blur(k), 0.0, 1.0);
    Rng rng(18);
    Problem p = Problem::make(blur, blur.observe(x, rng), x.shape());
    CHECK(default_initialization(p) == p.y);

    Fidelity sr = Fidelity::gaussian(LinearOperator::blur(k, 2), 0.0, 1.0);
    Problem q = Problem::make(sr, sr.observe(x, rng), x.shape());
    Image expected = sr.op().adjoint(q.y, x.shape());
    expected *= 4.0;
    CHECK(default_initialization(q) == expected);

    Fidelity sp = Fidelity::speckle(10.0, 0.01);
    Image y = uniform_image({8, 8, 1}, 19, 0.0, 0.5);
    y[0] = 0.0;
    Problem s = Problem::make(sp, y, y.shape());
    const Image init = default_initialization(s);
    CHECK(init[0] == 0.01);
    CHECK(init[1] == std::max(0.01, y[1]));

    CHECK(kind_of([&] { (void)Problem::make(sr, x, x.shape()); }) == ErrorKind::Dimension);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "eqr/error.hpp"
#include "eqr/image.hpp"
#include "eqr/rng.hpp"
#include "eqr/transforms.hpp"

using namespace eqr;

namespace {

Image random_image(Shape s, std::uint64_t seed)
{
    Rng rng(seed);
    return rng.normal_image(s);
}

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

Image smooth_image(int n)
{
    Image img(n, n);
    const double pi = std::numbers::pi;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double u = 2 * pi * r / n, v = 2 * pi * c / n;
            img.at(r, c) = 0.5 + 0.25 * std::sin(u) * std::cos(v) + 0.1 * std::cos(u + 2 * v);
        }
    return img;
}

std::vector<Image> orbit(const TransformLaw& law, const Image& x)
{
    std::vector<Image> out;
    for (const auto& [g, w] : law.enumerate()) out.push_back(g.apply(x));
    std::sort(out.begin(), out.end(), [](const Image& a, const Image& b) { return a.values() < b.values(); });
    return out;
}

}  // namespace

TEST_CASE("rot90 on a 2x2 image")
{
    Image x(Shape{2, 2, 1}, {1, 2, 3, 4});
    Image y = Transform::rot90(1).apply(x);
    CHECK(y == Image(Shape{2, 2, 1}, {2, 4, 1, 3}));
}

TEST_CASE("rot90 on a non-square image transposes the shape")
{
    Image x = random_image({3, 5, 2}, 1);
    const Transform t = Transform::rot90(1);
    Image y = t.apply(x);
    REQUIRE(y.shape() == Shape{5, 3, 2});
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 3; ++c)
            for (int ch = 0; ch < 2; ++ch) CHECK(y.at(r, c, ch) == x.at(c, 5 - 1 - r, ch));
    CHECK(t.jacobian_transpose(y) == x);
    CHECK(Transform::rot90(4).apply(x) == x);
    CHECK(Transform::rot90(-1).apply(y) == x);
}

TEST_CASE("flips and translations")
{
    Image x = random_image({4, 6, 3}, 2);
    for (FlipAxis a : {FlipAxis::None, FlipAxis::Horizontal, FlipAxis::Vertical, FlipAxis::Both}) {
        const Transform f = Transform::flip(a);
        CHECK(f.apply(f.apply(x)) == x);
    }
    Image h = Transform::flip(FlipAxis::Horizontal).apply(x);
    Image v = Transform::flip(FlipAxis::Vertical).apply(x);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 6; ++c) {
            CHECK(h.at(r, c, 1) == x.at(r, 5 - c, 1));
            CHECK(v.at(r, c, 1) == x.at(3 - r, c, 1));
        }

    Image row(Shape{1, 3, 1}, {1, 2, 3});
    CHECK(Transform::translate(1, 0).apply(row) == Image(Shape{1, 3, 1}, {3, 1, 2}));
    Image col = Image::vector({1, 2, 3});
    CHECK(Transform::translate(0, 1).apply(col) == Image::vector({3, 1, 2}));
    CHECK(Transform::translate(-7, 9).apply(Transform::translate(7, -9).apply(x)) == x);
}

TEST_CASE("jacobian transpose of the isometries")
{
    Rng rng(3);
    const Shape s{5, 5, 2};
    const std::vector<Transform> ts = {Transform::identity(),        Transform::rot90(1),
                                       Transform::rot90(2),          Transform::rot90(3),
                                       Transform::flip(FlipAxis::Both), Transform::flip(FlipAxis::Vertical),
                                       Transform::translate(2, -3),  Transform::translate(-1, 4)};
    for (const auto& t : ts) {
        Image x = rng.normal_image(s);
        Image v = rng.normal_image(t.output_shape(s));
        CHECK(t.is_permutation());
        CHECK(t.jacobian_transpose(t.apply(x)) == x);
        CHECK(std::abs(dot(t.apply(x), v) - dot(x, t.jacobian_transpose(v))) < 1e-12);
        CHECK(norm(t.apply(x)) == doctest::Approx(norm(x)).epsilon(1e-12));
        REQUIRE(t.inverse().has_value());
        CHECK(t.inverse()->apply(t.apply(x)) == x);
        CHECK(t.jacobian_transpose(v) == t.inverse()->apply(v));
    }
}

TEST_CASE("noise shift")
{
    Image z = random_image({4, 4, 1}, 4);
    Image x = random_image({4, 4, 1}, 5);
    const Transform t = Transform::noise_shift(z, 0.3);
    CHECK(max_abs_difference(t.apply(x), x + 0.3 * z) == 0.0);
    CHECK(t.jacobian_transpose(x) == x);
    CHECK_FALSE(t.is_permutation());
}

TEST_CASE("subpixel rotation round trip")
{
    Image x = smooth_image(48);
    for (double theta : {0.1, 0.3, 0.7, 1.2, -2.5, 3.0}) {
        const Transform t = Transform::subpixel_rotate(theta);
        Image back = t.jacobian_transpose(t.apply(x));
        CHECK(norm(back - x) / norm(x) < 0.05);
    }
    // Quarter turns reduce to the exact permutation.
    Image q = rotate_subpixel(x, std::numbers::pi / 2);
    CHECK(max_abs_difference(q, Transform::rot90(1).apply(x)) < 1e-12);
    CHECK(max_abs_difference(rotate_subpixel(x, 0.0), x) < 1e-12);
}

TEST_CASE("sampling")
{
    Rng rng(6);
    const Shape s{4, 4, 1};
    for (int i = 0; i < 50; ++i) CHECK(TransformLaw::identity().sample(rng, s).id() == "id");

    std::map<std::string, int> counts;
    const int n = 10000;
    for (int i = 0; i < n; ++i) counts[TransformLaw::rot90().sample(rng, s).id()]++;
    REQUIRE(counts.size() == 4);
    for (const auto& [id, c] : counts) {
        CHECK(c / double(n) >= 0.23);
        CHECK(c / double(n) <= 0.27);
    }

    Rng a(77), b(77);
    for (const auto& law : {TransformLaw::flip(), TransformLaw::translate(3), TransformLaw::subpixel_rotation(),
                            TransformLaw::all(0.1)}) {
        for (int i = 0; i < 20; ++i) {
            const Transform ta = law.sample(a, s);
            const Transform tb = law.sample(b, s);
            CHECK(ta.id() == tb.id());
        }
    }

    int in_range = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto t = TransformLaw::translate(2).sample(rng, s);
        const auto& tr = std::get<Transform::Translate>(t.variant());
        in_range += (std::abs(tr.dx) <= 2 && std::abs(tr.dy) <= 2);
    }
    CHECK(in_range == 1000);

    double lo = 10, hi = -10;
    for (int i = 0; i < 2000; ++i) {
        const auto t = TransformLaw::subpixel_rotation().sample(rng, s);
        const double th = std::get<Transform::SubpixelRotate>(t.variant()).theta;
        lo = std::min(lo, th);
        hi = std::max(hi, th);
    }
    CHECK(lo >= -std::numbers::pi);
    CHECK(hi <= std::numbers::pi);
    CHECK(lo < -3.0);
    CHECK(hi > 3.0);
}

TEST_CASE("gaussian shift draws standard normal z")
{
    Rng rng(8);
    const Shape s{8, 8, 1};
    double m = 0.0, m2 = 0.0;
    const int draws = 400;
    for (int i = 0; i < draws; ++i) {
        const auto t = TransformLaw::gaussian_shift(0.2).sample(rng, s);
        const auto& ns = std::get<Transform::NoiseShift>(t.variant());
        CHECK(ns.scale == 0.2);
        m += sum(ns.z);
        m2 += squared_norm(ns.z);
    }
    const double count = draws * 64.0;
    CHECK(std::abs(m / count) < 5.0 / std::sqrt(count));
    CHECK(std::abs(m2 / count - 1.0) < 5.0 * std::sqrt(2.0 / count));
}

TEST_CASE("enumeration")
{
    auto check_uniform = [](const TransformLaw& law, std::size_t size) {
        const auto elems = law.enumerate();
        REQUIRE(elems.size() == size);
        double total = 0.0;
        for (const auto& [g, w] : elems) {
            CHECK(w == doctest::Approx(1.0 / double(size)).epsilon(1e-15));
            total += w;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    };
    check_uniform(TransformLaw::identity(), 1);
    check_uniform(TransformLaw::rot90(), 4);
    check_uniform(TransformLaw::flip(), 4);
    check_uniform(TransformLaw::translate(2), 25);
    CHECK(TransformLaw::rot90().enumerate().front().second == 0.25);

    CHECK_FALSE(TransformLaw::subpixel_rotation().enumerable());
    CHECK_FALSE(TransformLaw::gaussian_shift(0.1).enumerable());
    CHECK(kind_of([] { (void)TransformLaw::subpixel_rotation().enumerate(); }) == ErrorKind::Unsupported);
    CHECK(kind_of([] { (void)TransformLaw::gaussian_shift(0.1).enumerate(); }) == ErrorKind::Unsupported);
    CHECK(kind_of([] { (void)TransformLaw::all(0.1).enumerate(); }) == ErrorKind::Unsupported);
}

TEST_CASE("closure of the finite groups")
{
    const Image x = random_image({5, 5, 1}, 9);
    for (const auto& law : {TransformLaw::rot90(), TransformLaw::flip(), TransformLaw::translate(2)}) {
        const auto elems = law.enumerate();
        std::vector<Image> images;
        for (const auto& [g, w] : elems) images.push_back(g.apply(x));
        // Circular translations with |d| <= m compose to shifts mod 5, which are
        // all in the set for m = 2.
        for (const auto& [g, wg] : elems)
            for (const auto& [h, wh] : elems) {
                const Image gh = g.apply(h.apply(x));
                CHECK(std::find(images.begin(), images.end(), gh) != images.end());
            }
    }
}

TEST_CASE("right invariance of the uniform measure")
{
    // translate(2) on a 5 x 5 grid is exactly Z_5 x Z_5; smaller shift ranges
    // are not closed under composition.
    const Image x = random_image({5, 5, 1}, 10);
    auto phi = [](const Image& img) {
        double s = 0.0;
        for (std::size_t i = 0; i < img.size(); ++i) s += std::pow(img[i], 3) * double(i + 1);
        return s;
    };
    for (const auto& law : {TransformLaw::rot90(), TransformLaw::flip(), TransformLaw::translate(2)}) {
        const auto elems = law.enumerate();
        const auto base = orbit(law, x);
        for (const auto& [h, wh] : elems) {
            const Image hx = h.apply(x);
            // The orbit of h(x) is the orbit of x as a multiset, so any average
            // over it is unchanged.
            CHECK(orbit(law, hx) == base);
            double a = 0.0, b = 0.0;
            for (const auto& img : orbit(law, hx)) a += phi(img);
            for (const auto& img : base) b += phi(img);
            CHECK(a == b);
        }
    }
}

TEST_CASE("unbiasedness of the laws")
{
    const Shape s{4, 4, 1};
    const Image x = random_image(s, 11);
    Rng rng(12);
    const int n = 100000;
    for (const auto& law : {TransformLaw::rot90(), TransformLaw::flip(), TransformLaw::translate(8),
                            TransformLaw::gaussian_shift(0.3)}) {
        Image mean = Image::zeros(s);
        Image m2 = Image::zeros(s);
        for (int i = 0; i < n; ++i) {
            const Transform g = law.sample(rng, s);
            Image v = g.jacobian_transpose(g.apply(x));
            mean += v;
            for (std::size_t j = 0; j < v.size(); ++j) m2[j] += v[j] * v[j];
        }
        for (std::size_t j = 0; j < s.size(); ++j) {
            const double mu = mean[j] / n;
            const double var = std::max(m2[j] / n - mu * mu, 0.0);
            const double se = std::sqrt(var / n);
            CHECK(std::abs(mu - x[j]) <= 5.0 * se + 1e-9);  // floor covers summation rounding of 1e5 terms
        }
    }
}

TEST_CASE("variance bound")
{
    const Shape s{6, 6, 1};
    CHECK(TransformLaw::identity().variance_bound_squared(s) == 0.0);
    REQUIRE(TransformLaw::gaussian_shift(0.2).variance_bound_squared(s).has_value());
    CHECK(*TransformLaw::gaussian_shift(0.2).variance_bound_squared(s) == doctest::Approx(0.04 * 36).epsilon(1e-14));
    CHECK_FALSE(TransformLaw::rot90().variance_bound_squared(s).has_value());

    const Image x = random_image(s, 13);
    Rng rng(14);
    const int n = 20000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const Image gx = TransformLaw::gaussian_shift(0.2).sample(rng, s).apply(x);
        acc += squared_norm(gx - x);
    }
    // E||sigma z||^2 = sigma^2 d has relative std sqrt(2/d) per draw.
    const double mu2 = 0.04 * 36;
    CHECK(std::abs(acc / n - mu2) < 5.0 * mu2 * std::sqrt(2.0 / 36.0 / n));
}

TEST_CASE("law names")
{
    CHECK(law_from_name("identity", 0.1).kind() == GroupKind::Identity);
    CHECK(law_from_name("rotation", 0.1).kind() == GroupKind::Rot90);
    CHECK(law_from_name("flip", 0.1).kind() == GroupKind::Flip);
    CHECK(law_from_name("translation", 0.1, 3).max_shift() == 3);
    CHECK(law_from_name("subpixel_rotation", 0.1).kind() == GroupKind::SubpixelRotation);
    CHECK(law_from_name("snore", 0.25).sigma() == 0.25);
    CHECK(law_from_name("all", 0.1).kind() == GroupKind::Mixture);
    CHECK(law_from_name("all", 0.1).with_noise_sigma(0.5).members().back().sigma() == 0.5);
    CHECK(kind_of([] { (void)law_from_name("shear", 0.1); }) == ErrorKind::Config);
    CHECK(kind_of([] { (void)TransformLaw::translate(-1); }) == ErrorKind::Config);
    CHECK(kind_of([] { (void)TransformLaw::mixture({TransformLaw::flip()}, {0.0}); }) == ErrorKind::Config);
}

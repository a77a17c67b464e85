#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "eqr/image.hpp"
#include "eqr/rng.hpp"

namespace eqr {

enum class FlipAxis { None, Horizontal, Vertical, Both };

/// One element g of a transformation set, with its action x -> g(x) and the
/// Jacobian-transpose action v -> J_g^T v.
///
/// Conventions (H x W image, row r, column c):
///   Rot90(1):            out(r, c) = in(c, W-1-r), output is W x H
///   Flip(Horizontal):    out(r, c) = in(r, W-1-c)   (left-right mirror)
///   Flip(Vertical):      out(r, c) = in(H-1-r, c)
///   Translate(dx, dy):   out(r, c) = in(r-dy, c-dx) with wrap-around
///   SubpixelRotate(t):   out(p) = in(R_t p) about the image center, with
///                        R_t the rotation of angle t; Rot90(1) is t = pi/2
///   NoiseShift(z, s):    out = in + s * z
class Transform {
public:
    struct Identity {};
    struct Rot90 { int k = 0; };
    struct Flip { FlipAxis axis = FlipAxis::None; };
    struct Translate { int dx = 0; int dy = 0; };
    struct SubpixelRotate { double theta = 0.0; };
    struct NoiseShift { Image z; double scale = 0.0; };
    using Variant = std::variant<Identity, Rot90, Flip, Translate, SubpixelRotate, NoiseShift>;

    Transform() = default;

    static Transform identity() { return Transform(Identity{}); }
    static Transform rot90(int k);
    static Transform flip(FlipAxis axis) { return Transform(Flip{axis}); }
    static Transform translate(int dx, int dy) { return Transform(Translate{dx, dy}); }
    static Transform subpixel_rotate(double theta) { return Transform(SubpixelRotate{theta}); }
    static Transform noise_shift(Image z, double scale)
    {
        return Transform(NoiseShift{std::move(z), scale});
    }

    Image apply(const Image& x) const;
    /// J_g^T v. For the permutation kinds this is the inverse permutation,
    /// for NoiseShift the identity, for SubpixelRotate the rotation by -theta.
    Image jacobian_transpose(const Image& v) const;
    Shape output_shape(const Shape& input) const;

    /// Exact inverse for Identity / Rot90 / Flip / Translate.
    std::optional<Transform> inverse() const;
    /// True for the exact pixel permutations (norm preserving bit-for-bit).
    bool is_permutation() const noexcept;

    /// Short textual id, e.g. "rot90:1", "flip:h", "shift:2,-1", "noise".
    std::string id() const;

    const Variant& variant() const noexcept { return v_; }

private:
    explicit Transform(Variant v) : v_(std::move(v)) {}
    Variant v_{Identity{}};
};

/// Rotation by theta via Rot90 steps plus a three-shear remainder in
/// [-pi/4, pi/4]; shears use cubic interpolation with circular wrap.
Image rotate_subpixel(const Image& x, double theta);
/// The Jacobian-transpose surrogate: undo the shears by -phi, then Rot90(-k).
Image rotate_subpixel_inverse(const Image& v, double theta);

enum class GroupKind { Identity, Rot90, Flip, Translate, SubpixelRotation, GaussianShift, Mixture };

/// A transformation set G together with its sampling distribution pi.
class TransformLaw {
public:
    static TransformLaw identity();
    static TransformLaw rot90();
    static TransformLaw flip();
    /// dx, dy uniform in [-max_shift, max_shift], circular.
    static TransformLaw translate(int max_shift = 8);
    /// theta ~ U[-pi, pi].
    static TransformLaw subpixel_rotation();
    /// g_z(x) = x + sigma z, z ~ N(0, I).
    static TransformLaw gaussian_shift(double sigma);
    /// Pick a member law (uniformly, or by weights), then draw from it.
    static TransformLaw mixture(std::vector<TransformLaw> members, std::vector<double> weights = {});
    /// The "all transformations" mixture: rotation, subpixel rotation, flip,
    /// translation and Gaussian shift with the given sigma.
    static TransformLaw all(double sigma, int max_shift = 8);

    GroupKind kind() const noexcept { return kind_; }
    bool enumerable() const noexcept;
    std::string name() const;

    Transform sample(Rng& rng, const Shape& shape) const;
    /// All elements with uniform weights; unsupported for infinite sets.
    std::vector<std::pair<Transform, double>> enumerate() const;

    /// mu^2 with E||G(x) - E G(x)||^2 <= mu^2 for every x, when it exists:
    /// 0 for Identity and sigma^2 d for GaussianShift. The isometry groups have
    /// no uniform bound over R^d.
    std::optional<double> variance_bound_squared(const Shape& shape) const;

    /// Replace the Gaussian-shift sigma (recursively through mixtures).
    TransformLaw with_noise_sigma(double sigma) const;

    double sigma() const noexcept { return sigma_; }
    int max_shift() const noexcept { return max_shift_; }
    const std::vector<TransformLaw>& members() const noexcept { return members_; }
    const std::vector<double>& weights() const noexcept { return weights_; }

private:
    explicit TransformLaw(GroupKind kind) : kind_(kind) {}

    GroupKind kind_ = GroupKind::Identity;
    int max_shift_ = 0;
    double sigma_ = 0.0;
    std::vector<TransformLaw> members_;
    std::vector<double> weights_;
};

/// Parse a law name: identity, rotation, flip, translation, subpixel_rotation,
/// snore (Gaussian shift with `sigma`), all.
TransformLaw law_from_name(const std::string& name, double sigma, int max_shift = 8);

}  // namespace eqr

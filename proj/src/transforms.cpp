#include "eqr/transforms.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "eqr/error.hpp"

namespace eqr {
namespace {

int wrap(int i, int n) noexcept
{
    const int r = i % n;
    return r < 0 ? r + n : r;
}

int normalize_quarter_turns(int k) noexcept { return ((k % 4) + 4) % 4; }

Image rot90_apply(const Image& x, int k)
{
    k = normalize_quarter_turns(k);
    if (k == 0) return x;
    const int h = x.height();
    const int w = x.width();
    const int nc = x.channels();
    const bool transpose = (k % 2) == 1;
    Image out(transpose ? w : h, transpose ? h : w, nc);
    for (int r = 0; r < out.height(); ++r) {
        for (int c = 0; c < out.width(); ++c) {
            int sr = 0;
            int sc = 0;
            switch (k) {
                case 1: sr = c; sc = w - 1 - r; break;
                case 2: sr = h - 1 - r; sc = w - 1 - c; break;
                default: sr = h - 1 - c; sc = r; break;
            }
            for (int p = 0; p < nc; ++p) out.at(r, c, p) = x.at(sr, sc, p);
        }
    }
    return out;
}

Image flip_apply(const Image& x, FlipAxis axis)
{
    if (axis == FlipAxis::None) return x;
    const int h = x.height();
    const int w = x.width();
    const bool mirror_cols = axis == FlipAxis::Horizontal || axis == FlipAxis::Both;
    const bool mirror_rows = axis == FlipAxis::Vertical || axis == FlipAxis::Both;
    Image out = Image::zeros_like(x);
    for (int r = 0; r < h; ++r) {
        const int sr = mirror_rows ? h - 1 - r : r;
        for (int c = 0; c < w; ++c) {
            const int sc = mirror_cols ? w - 1 - c : c;
            for (int p = 0; p < x.channels(); ++p) out.at(r, c, p) = x.at(sr, sc, p);
        }
    }
    return out;
}

Image translate_apply(const Image& x, int dx, int dy)
{
    const int h = x.height();
    const int w = x.width();
    Image out = Image::zeros_like(x);
    for (int r = 0; r < h; ++r) {
        const int sr = wrap(r - dy, h);
        for (int c = 0; c < w; ++c) {
            const int sc = wrap(c - dx, w);
            for (int p = 0; p < x.channels(); ++p) out.at(r, c, p) = x.at(sr, sc, p);
        }
    }
    return out;
}

// Keys cubic convolution weights, a = -0.5.
void cubic_weights(double t, double w[4]) noexcept
{
    constexpr double a = -0.5;
    const double t1 = t + 1.0;
    const double t2 = 1.0 - t;
    const double t3 = 2.0 - t;
    w[0] = ((a * t1 - 5.0 * a) * t1 + 8.0 * a) * t1 - 4.0 * a;
    w[1] = ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    w[2] = ((a + 2.0) * t2 - (a + 3.0)) * t2 * t2 + 1.0;
    w[3] = ((a * t3 - 5.0 * a) * t3 + 8.0 * a) * t3 - 4.0 * a;
}

// out(r, c) = u(r, c + factor * (r - rc)); rows wrap around.
Image shear_rows(const Image& u, double factor)
{
    const int h = u.height();
    const int w = u.width();
    const int nc = u.channels();
    const double rc = 0.5 * (h - 1);
    Image out = Image::zeros_like(u);
    for (int r = 0; r < h; ++r) {
        const double shift = factor * (r - rc);
        const double base = std::floor(shift);
        const double frac = shift - base;
        const int ishift = static_cast<int>(base);
        double wt[4];
        cubic_weights(frac, wt);
        for (int c = 0; c < w; ++c) {
            for (int p = 0; p < nc; ++p) {
                double s = 0.0;
                for (int t = 0; t < 4; ++t) s += wt[t] * u.at(r, wrap(c + ishift + t - 1, w), p);
                out.at(r, c, p) = s;
            }
        }
    }
    return out;
}

// out(r, c) = u(r + factor * (c - cc), c); columns wrap around.
Image shear_cols(const Image& u, double factor)
{
    const int h = u.height();
    const int w = u.width();
    const int nc = u.channels();
    const double cc = 0.5 * (w - 1);
    Image out = Image::zeros_like(u);
    for (int c = 0; c < w; ++c) {
        const double shift = factor * (c - cc);
        const double base = std::floor(shift);
        const double frac = shift - base;
        const int ishift = static_cast<int>(base);
        double wt[4];
        cubic_weights(frac, wt);
        for (int r = 0; r < h; ++r) {
            for (int p = 0; p < nc; ++p) {
                double s = 0.0;
                for (int t = 0; t < 4; ++t) s += wt[t] * u.at(wrap(r + ishift + t - 1, h), c, p);
                out.at(r, c, p) = s;
            }
        }
    }
    return out;
}

// In centered (x = column, y = row) coordinates, R_phi = Sx(a) Sy(b) Sx(a)
// with a = -tan(phi/2), b = sin(phi); u -> u(R p) applies Sx first.
Image three_shear(const Image& x, double phi)
{
    if (phi == 0.0) return x;
    const double a = -std::tan(0.5 * phi);
    const double b = std::sin(phi);
    return shear_rows(shear_cols(shear_rows(x, a), b), a);
}

std::pair<int, double> split_angle(double theta) noexcept
{
    const double quarter = 0.5 * std::numbers::pi;
    const double k = std::round(theta / quarter);
    return {static_cast<int>(k), theta - k * quarter};
}

}  // namespace

Image rotate_subpixel(const Image& x, double theta)
{
    const auto [k, phi] = split_angle(theta);
    return three_shear(rot90_apply(x, k), phi);
}

Image rotate_subpixel_inverse(const Image& v, double theta)
{
    const auto [k, phi] = split_angle(theta);
    return rot90_apply(three_shear(v, -phi), -k);
}

Transform Transform::rot90(int k) { return Transform(Rot90{normalize_quarter_turns(k)}); }

Image Transform::apply(const Image& x) const
{
    struct Visitor {
        const Image& x;
        Image operator()(const Identity&) const { return x; }
        Image operator()(const Rot90& t) const { return rot90_apply(x, t.k); }
        Image operator()(const Flip& t) const { return flip_apply(x, t.axis); }
        Image operator()(const Translate& t) const { return translate_apply(x, t.dx, t.dy); }
        Image operator()(const SubpixelRotate& t) const { return rotate_subpixel(x, t.theta); }
        Image operator()(const NoiseShift& t) const
        {
            require_same_shape(x, t.z, "noise shift");
            Image out = x;
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + t.scale * t.z[i];
            return out;
        }
    };
    return std::visit(Visitor{x}, v_);
}

Image Transform::jacobian_transpose(const Image& v) const
{
    struct Visitor {
        const Image& v;
        Image operator()(const Identity&) const { return v; }
        Image operator()(const Rot90& t) const { return rot90_apply(v, -t.k); }
        Image operator()(const Flip& t) const { return flip_apply(v, t.axis); }
        Image operator()(const Translate& t) const { return translate_apply(v, -t.dx, -t.dy); }
        Image operator()(const SubpixelRotate& t) const
        {
            return rotate_subpixel_inverse(v, t.theta);
        }
        Image operator()(const NoiseShift& t) const
        {
            require_same_shape(v, t.z, "noise shift");
            return v;
        }
    };
    return std::visit(Visitor{v}, v_);
}

Shape Transform::output_shape(const Shape& input) const
{
    int k = 0;
    if (const auto* r = std::get_if<Rot90>(&v_)) k = r->k;
    if (const auto* s = std::get_if<SubpixelRotate>(&v_)) k = split_angle(s->theta).first;
    if (normalize_quarter_turns(k) % 2 == 1) return Shape{input.width, input.height, input.channels};
    return input;
}

std::optional<Transform> Transform::inverse() const
{
    if (std::holds_alternative<Identity>(v_)) return identity();
    if (const auto* r = std::get_if<Rot90>(&v_)) return rot90(-r->k);
    if (std::holds_alternative<Flip>(v_)) return *this;
    if (const auto* t = std::get_if<Translate>(&v_)) return translate(-t->dx, -t->dy);
    return std::nullopt;
}

bool Transform::is_permutation() const noexcept
{
    return std::holds_alternative<Identity>(v_) || std::holds_alternative<Rot90>(v_) ||
           std::holds_alternative<Flip>(v_) || std::holds_alternative<Translate>(v_);
}

std::string Transform::id() const
{
    struct Visitor {
        std::string operator()(const Identity&) const { return "id"; }
        std::string operator()(const Rot90& t) const { return "rot90:" + std::to_string(t.k); }
        std::string operator()(const Flip& t) const
        {
            switch (t.axis) {
                case FlipAxis::None: return "flip:none";
                case FlipAxis::Horizontal: return "flip:h";
                case FlipAxis::Vertical: return "flip:v";
                case FlipAxis::Both: return "flip:hv";
            }
            return "flip";
        }
        std::string operator()(const Translate& t) const
        {
            return "shift:" + std::to_string(t.dx) + "," + std::to_string(t.dy);
        }
        std::string operator()(const SubpixelRotate& t) const
        {
            char buf[48];
            std::snprintf(buf, sizeof buf, "subrot:%.6f", t.theta);
            return buf;
        }
        std::string operator()(const NoiseShift&) const { return "noise"; }
    };
    return std::visit(Visitor{}, v_);
}

TransformLaw TransformLaw::identity() { return TransformLaw(GroupKind::Identity); }
TransformLaw TransformLaw::rot90() { return TransformLaw(GroupKind::Rot90); }
TransformLaw TransformLaw::flip() { return TransformLaw(GroupKind::Flip); }

TransformLaw TransformLaw::translate(int max_shift)
{
    require(max_shift >= 0, ErrorKind::Config, "translation max_shift must be >= 0");
    TransformLaw law(GroupKind::Translate);
    law.max_shift_ = max_shift;
    return law;
}

TransformLaw TransformLaw::subpixel_rotation() { return TransformLaw(GroupKind::SubpixelRotation); }

TransformLaw TransformLaw::gaussian_shift(double sigma)
{
    require(sigma >= 0.0 && std::isfinite(sigma), ErrorKind::Config,
            "gaussian shift sigma must be finite and >= 0");
    TransformLaw law(GroupKind::GaussianShift);
    law.sigma_ = sigma;
    return law;
}

TransformLaw TransformLaw::mixture(std::vector<TransformLaw> members, std::vector<double> weights)
{
    require(!members.empty(), ErrorKind::Config, "mixture law needs at least one member");
    if (weights.empty()) weights.assign(members.size(), 1.0 / static_cast<double>(members.size()));
    require(weights.size() == members.size(), ErrorKind::Config,
            "mixture weights must match the member count");
    double total = 0.0;
    for (double w : weights) {
        require(w >= 0.0 && std::isfinite(w), ErrorKind::Config, "mixture weights must be >= 0");
        total += w;
    }
    require(total > 0.0, ErrorKind::Config, "mixture weights sum to zero");
    for (double& w : weights) w /= total;
    TransformLaw law(GroupKind::Mixture);
    law.members_ = std::move(members);
    law.weights_ = std::move(weights);
    return law;
}

TransformLaw TransformLaw::all(double sigma, int max_shift)
{
    return mixture({rot90(), subpixel_rotation(), flip(), translate(max_shift), gaussian_shift(sigma)});
}

bool TransformLaw::enumerable() const noexcept
{
    switch (kind_) {
        case GroupKind::Identity:
        case GroupKind::Rot90:
        case GroupKind::Flip:
        case GroupKind::Translate: return true;
        default: return false;
    }
}

std::string TransformLaw::name() const
{
    switch (kind_) {
        case GroupKind::Identity: return "identity";
        case GroupKind::Rot90: return "rotation";
        case GroupKind::Flip: return "flip";
        case GroupKind::Translate: return "translation";
        case GroupKind::SubpixelRotation: return "subpixel_rotation";
        case GroupKind::GaussianShift: return "snore";
        case GroupKind::Mixture: return "all";
    }
    return "unknown";
}

Transform TransformLaw::sample(Rng& rng, const Shape& shape) const
{
    switch (kind_) {
        case GroupKind::Identity: return Transform::identity();
        case GroupKind::Rot90: return Transform::rot90(static_cast<int>(rng.uniform_int(0, 3)));
        case GroupKind::Flip: {
            static constexpr FlipAxis axes[] = {FlipAxis::None, FlipAxis::Horizontal,
                                                FlipAxis::Vertical, FlipAxis::Both};
            return Transform::flip(axes[rng.uniform_int(0, 3)]);
        }
        case GroupKind::Translate: {
            const int dx = static_cast<int>(rng.uniform_int(-max_shift_, max_shift_));
            const int dy = static_cast<int>(rng.uniform_int(-max_shift_, max_shift_));
            return Transform::translate(dx, dy);
        }
        case GroupKind::SubpixelRotation:
            return Transform::subpixel_rotate(rng.uniform(-std::numbers::pi, std::numbers::pi));
        case GroupKind::GaussianShift: return Transform::noise_shift(rng.normal_image(shape), sigma_);
        case GroupKind::Mixture: {
            const double u = rng.uniform();
            double acc = 0.0;
            std::size_t pick = members_.size() - 1;
            for (std::size_t i = 0; i < weights_.size(); ++i) {
                acc += weights_[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
            return members_[pick].sample(rng, shape);
        }
    }
    return Transform::identity();
}

std::vector<std::pair<Transform, double>> TransformLaw::enumerate() const
{
    require(enumerable(), ErrorKind::Unsupported, "law '" + name() + "' is not enumerable");
    std::vector<Transform> elements;
    switch (kind_) {
        case GroupKind::Identity: elements.push_back(Transform::identity()); break;
        case GroupKind::Rot90:
            for (int k = 0; k < 4; ++k) elements.push_back(Transform::rot90(k));
            break;
        case GroupKind::Flip:
            for (FlipAxis a : {FlipAxis::None, FlipAxis::Horizontal, FlipAxis::Vertical, FlipAxis::Both}) {
                elements.push_back(Transform::flip(a));
            }
            break;
        case GroupKind::Translate:
            for (int dy = -max_shift_; dy <= max_shift_; ++dy) {
                for (int dx = -max_shift_; dx <= max_shift_; ++dx) {
                    elements.push_back(Transform::translate(dx, dy));
                }
            }
            break;
        default: break;
    }
    const double w = 1.0 / static_cast<double>(elements.size());
    std::vector<std::pair<Transform, double>> out;
    out.reserve(elements.size());
    for (auto& e : elements) out.emplace_back(std::move(e), w);
    return out;
}

std::optional<double> TransformLaw::variance_bound_squared(const Shape& shape) const
{
    switch (kind_) {
        case GroupKind::Identity: return 0.0;
        case GroupKind::GaussianShift: return sigma_ * sigma_ * static_cast<double>(shape.size());
        default: return std::nullopt;
    }
}

TransformLaw TransformLaw::with_noise_sigma(double sigma) const
{
    TransformLaw out = *this;
    if (kind_ == GroupKind::GaussianShift) out.sigma_ = sigma;
    for (auto& m : out.members_) m = m.with_noise_sigma(sigma);
    return out;
}

TransformLaw law_from_name(const std::string& name, double sigma, int max_shift)
{
    if (name == "identity" || name == "none") return TransformLaw::identity();
    if (name == "rotation" || name == "rot90") return TransformLaw::rot90();
    if (name == "flip") return TransformLaw::flip();
    if (name == "translation") return TransformLaw::translate(max_shift);
    if (name == "subpixel_rotation") return TransformLaw::subpixel_rotation();
    if (name == "snore" || name == "gaussian_shift") return TransformLaw::gaussian_shift(sigma);
    if (name == "all") return TransformLaw::all(sigma, max_shift);
    throw_error(ErrorKind::Config,
                "unknown transformation group '" + name +
                    "' (valid: identity, rotation, flip, translation, subpixel_rotation, snore, all)");
}

}  // namespace eqr

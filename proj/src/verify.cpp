#include "eqr/verify.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "eqr/error.hpp"

namespace eqr {
namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kComplianceBox = 1e3;
constexpr double kMaxExcludedFraction = 0.05;

Vec to_vec(const Image& x)
{
    return Eigen::Map<const Vec>(x.data().data(), static_cast<Eigen::Index>(x.size()));
}

Image to_image(const Vec& v, const Shape& shape)
{
    Image out = Image::zeros(shape);
    Eigen::Map<Vec>(out.data().data(), static_cast<Eigen::Index>(out.size())) = v;
    return out;
}

Mat matrix_of(const SyntheticProblem& sp)
{
    return Eigen::Map<const RowMatrix>(sp.matrix.data().data(), sp.matrix.height(), sp.matrix.width());
}

Mat haar_orthogonal(int n, Rng& rng)
{
    Mat g(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ();
    const Mat r = qr.matrixQR();
    for (int j = 0; j < n; ++j) {
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    return q;
}

int wrap(int i, int n) noexcept
{
    const int r = i % n;
    return r < 0 ? r + n : r;
}

// Source pixel (r, c) -> index for the pixel permutation of g; written from
// the transform definitions, independently of transforms.cpp.
Mat permutation_matrix(const Transform& g, const Shape& shape)
{
    const int h = shape.height;
    const int w = shape.width;
    require(shape.channels == 1, ErrorKind::Unsupported, "oracle permutations are single channel");
    const int d = h * w;
    Mat p = Mat::Zero(d, d);
    const auto& v = g.variant();
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            int sr = r;
            int sc = c;
            if (const auto* rot = std::get_if<Transform::Rot90>(&v)) {
                require(h == w, ErrorKind::Unsupported, "oracle rotations need square images");
                for (int t = 0; t < rot->k; ++t) {
                    const int nr = sc;
                    const int nc = w - 1 - sr;
                    sr = nr;
                    sc = nc;
                }
            } else if (const auto* fl = std::get_if<Transform::Flip>(&v)) {
                if (fl->axis == FlipAxis::Horizontal || fl->axis == FlipAxis::Both) sc = w - 1 - c;
                if (fl->axis == FlipAxis::Vertical || fl->axis == FlipAxis::Both) sr = h - 1 - r;
            } else if (const auto* tr = std::get_if<Transform::Translate>(&v)) {
                sr = wrap(r - tr->dy, h);
                sc = wrap(c - tr->dx, w);
            } else if (!std::holds_alternative<Transform::Identity>(v)) {
                throw_error(ErrorKind::Unsupported, "no permutation matrix for transform " + g.id());
            }
            p(r * w + c, sr * w + sc) = 1.0;
        }
    }
    return p;
}

std::vector<std::pair<Transform, double>> oracle_elements(const TransformLaw& law)
{
    if (law.kind() == GroupKind::GaussianShift) return {{Transform::identity(), 1.0}};
    require(law.enumerable(), ErrorKind::Unsupported,
            "closed-form targets need an enumerable law or the Gaussian shift, got '" + law.name() + "'");
    return law.enumerate();
}

// Circular convolution matrix, from the definition
//   (W x)(r, c) = sum k(i, j) x(r - (i - kh/2), c - (j - kw/2)).
Mat convolution_matrix(const Image& kernel, const Shape& shape)
{
    const int h = shape.height;
    const int w = shape.width;
    const int d = h * w;
    Mat m = Mat::Zero(d, d);
    const int kh = kernel.height();
    const int kw = kernel.width();
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            for (int i = 0; i < kh; ++i) {
                for (int j = 0; j < kw; ++j) {
                    const int sr = wrap(r - (i - kh / 2), h);
                    const int sc = wrap(c - (j - kw / 2), w);
                    m(r * w + c, sr * w + sc) += kernel.at(i, j);
                }
            }
        }
    }
    return m;
}

Image smooth_pattern(int side)
{
    Image x(side, side, 1);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            const double u = 2.0 * std::numbers::pi * r / side;
            const double v = 2.0 * std::numbers::pi * c / side;
            x.at(r, c) = 0.5 + 0.25 * std::sin(u) * std::cos(v) + 0.1 * std::cos(u + 2.0 * v);
        }
    }
    return x;
}

double mean_of(const std::vector<double>& v)
{
    return v.empty() ? NAN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v)
{
    if (v.empty()) return NAN;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string label(const char* prefix, double v) { return std::string(prefix) + fmt(v); }

void require_invariant_prior(const SyntheticProblem& sp, const TransformLaw& law)
{
    require(law.enumerable(), ErrorKind::Config,
            "score checks need an enumerable law, got '" + law.name() + "'");
    for (const auto& [g, w] : law.enumerate()) {
        (void)w;
        bool ok = true;
        if (sp.gmm) {
            for (const Image& m : sp.gmm->means) ok = ok && g.apply(m) == m;
        } else {
            ok = g.apply(sp.prior_mean) == sp.prior_mean && g.apply(sp.prior_variances) == sp.prior_variances;
        }
        require(ok, ErrorKind::Config,
                "prior is not invariant under " + g.id() + "; the law is not equivariant for this prior");
    }
}

// Cesaro means of the seed-averaged sequence at n = N/8, N/4, N/2, N, fitted
// with a / n + b.
std::pair<double, double> plateau_fit(const std::vector<double>& averaged, std::vector<double>* means = nullptr)
{
    const std::size_t n = averaged.size();
    std::vector<double> ns;
    std::vector<double> cs;
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + averaged[k];
    for (std::size_t div : {8u, 4u, 2u, 1u}) {
        const std::size_t m = n / div;
        if (m == 0) continue;
        ns.push_back(static_cast<double>(m));
        cs.push_back(prefix[m] / static_cast<double>(m));
    }
    if (means != nullptr) *means = cs;
    return fit_inverse_plus_constant(ns, cs);
}

void add_plateau_checks(CheckReport& rep, const std::string& what, const std::vector<double>& levels,
                        const std::vector<double>& plateaus, const PlateauOptions& opt)
{
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i] == 0.0) {
            rep.add(what + "_plateau_sigma0", plateaus[i], "|b| < " + fmt(opt.zero_plateau),
                    std::abs(plateaus[i]) < opt.zero_plateau);
        } else {
            rep.add(what + "_plateau" + label("_sigma", levels[i]), plateaus[i]);
            xs.push_back(levels[i]);
            ys.push_back(plateaus[i]);
        }
    }
    if (xs.size() >= 2) {
        const double slope = loglog_slope(xs, ys);
        rep.add(what + "_loglog_slope", slope,
                "in [" + fmt(opt.slope_low) + ", " + fmt(opt.slope_high) + "]",
                std::isfinite(slope) && slope >= opt.slope_low && slope <= opt.slope_high);
        for (std::size_t i = 1; i < xs.size(); ++i) {
            rep.add(what + "_ratio" + label("_", xs[i]) + label("_over_", xs[i - 1]), ys[i] / ys[i - 1]);
        }
    }
}

struct SnoPnpRun {
    std::vector<double> grad_sq;      // ||grad F(x_k)||^2, k = 0..N-1
    std::vector<double> residual_sq;  // ||x_{k+1} - x_k||^2
    double min_distance = INFINITY;
    double final_grad = INFINITY;
    bool excluded = false;
};

void require_linear_instance(const LinearPnpInstance& inst, double factor, const char* what)
{
    require(inst.denoiser.kind() == DenoiserKind::LinearSmoothing, ErrorKind::Config,
            std::string(what) + " needs a LinearSmoothing denoiser");
    require(inst.denoiser.lipschitz_h() < 1.0, ErrorKind::Config,
            std::string(what) + " needs a certified L_h < 1");
    const double lf = inst.base.lipschitz_f();
    require(inst.base.lambda >= factor * lf * (1.0 - 1e-12), ErrorKind::Config,
            std::string(what) + " needs lambda >= " + fmt(factor) + " L_f = " + fmt(factor * lf) +
                ", got " + fmt(inst.base.lambda));
}

SnoPnpRun snopnp_run(const LinearPnpInstance& inst, const AffineModel& model, const Image& xstar,
                     double level, int n, std::uint64_t seed)
{
    const Problem problem = inst.base.problem();
    Rng rng(seed);
    SnoPnpRun out;
    out.grad_sq.reserve(static_cast<std::size_t>(n));
    out.residual_sq.reserve(static_cast<std::size_t>(n));
    Image x = default_initialization(problem);
    out.min_distance = norm(x - xstar);
    for (int k = 0; k < n; ++k) {
        out.grad_sq.push_back(squared_norm(model.gradient(x)));
        const Image z = rng.normal_image(x.shape());
        Image next = snopnp_step(x, problem, inst.denoiser, inst.base.lambda, z, level);
        if (!next.all_finite() || norm(next) > kComplianceBox) {
            out.excluded = true;
            return out;
        }
        out.residual_sq.push_back(squared_norm(next - x));
        x = std::move(next);
        out.min_distance = std::min(out.min_distance, norm(x - xstar));
    }
    out.final_grad = norm(model.gradient(x));
    return out;
}

std::vector<double> seed_average(const std::vector<std::vector<double>>& runs)
{
    if (runs.empty()) return {};
    std::vector<double> avg(runs.front().size(), 0.0);
    for (const auto& r : runs) {
        for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += r[k];
    }
    for (double& v : avg) v /= static_cast<double>(runs.size());
    return avg;
}

}  // namespace

// ---------------------------------------------------------------------------

Problem SyntheticProblem::problem() const
{
    Fidelity f = Fidelity::gaussian(LinearOperator::dense(matrix, shape, shape), 0.0, weight_sigma);
    return Problem::make(std::move(f), y, shape);
}

Denoiser SyntheticProblem::mmse(double s) const
{
    if (gmm) return Denoiser::gmm_mmse(*gmm, s);
    return Denoiser::gaussian_mmse(prior_mean, prior_variances, s);
}

double SyntheticProblem::lipschitz_f() const { return problem().lipschitz(); }

SyntheticOptions default_synthetic_options()
{
    SyntheticOptions o;
    o.anisotropy = 1e-3;
    return o;
}

SyntheticProblem make_synthetic(const SyntheticOptions& o)
{
    require(o.side >= 2, ErrorKind::Config, "synthetic side must be >= 2");
    require(o.singular_min > 0.0 && o.singular_max >= o.singular_min, ErrorKind::Config,
            "singular values must satisfy 0 < min <= max");
    require(o.prior_variance > 0.0 && std::abs(o.anisotropy) < 1.0, ErrorKind::Config,
            "prior variance must be > 0 with |anisotropy| < 1");
    SyntheticProblem sp;
    sp.shape = Shape{o.side, o.side, 1};
    const int d = o.side * o.side;
    Rng rng(o.seed);
    const Mat u = haar_orthogonal(d, rng);
    const Mat v = haar_orthogonal(d, rng);
    Vec s(d);
    for (int i = 0; i < d; ++i) {
        s(i) = d == 1 ? o.singular_max
                      : o.singular_max - (o.singular_max - o.singular_min) * i / static_cast<double>(d - 1);
    }
    const RowMatrix a = u * s.asDiagonal() * v.transpose();
    sp.matrix = Image(Shape{d, d, 1}, std::vector<double>(a.data(), a.data() + a.size()));
    sp.weight_sigma = o.weight_sigma;
    sp.x_true = smooth_pattern(o.side);
    Vec y = a * to_vec(sp.x_true);
    for (int i = 0; i < d; ++i) y(i) += o.noise * rng.normal();
    sp.y = to_image(y, sp.shape);
    sp.prior_mean = Image::constant(sp.shape, o.prior_mean);
    sp.prior_variances = Image(o.side, o.side, 1);
    for (int r = 0; r < o.side; ++r) {
        for (int c = 0; c < o.side; ++c) {
            const double t = 2.0 * c / (o.side - 1) - 1.0;
            sp.prior_variances.at(r, c) = o.prior_variance * (1.0 + o.anisotropy * t);
        }
    }
    sp.lambda = o.lambda;
    sp.sigma = o.sigma;
    return sp;
}

SyntheticProblem default_instance() { return make_synthetic(default_synthetic_options()); }

LinearPnpInstance default_linear_instance()
{
    SyntheticOptions o = default_synthetic_options();
    o.weight_sigma = 1.0;
    o.anisotropy = 0.0;
    SyntheticProblem sp = make_synthetic(o);
    sp.lambda = 3.0 * sp.lipschitz_f();
    sp.sigma = 0.04;
    Image k(3, 3, 1);
    const double taps[3] = {0.25, 0.5, 0.25};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) k.at(i, j) = taps[i] * taps[j];
    }
    // sigma0 below the smallest tested level keeps alpha(sigma) = alpha0.
    Denoiser d = Denoiser::linear_smoothing(std::move(k), 0.5, 0.005, sp.sigma);
    return LinearPnpInstance{std::move(sp), std::move(d)};
}

// ---------------------------------------------------------------------------

struct AffineModel::Impl {
    Shape shape;
    Mat h;
    Vec b;
    Mat m;  // denoiser matrix (pnp targets)
};

AffineModel AffineModel::ered_target(const SyntheticProblem& sp, const TransformLaw& law, double s)
{
    require(!sp.gmm, ErrorKind::Unsupported, "closed-form targets need a Gaussian prior");
    require(s >= 0.0, ErrorKind::Config, "noise level must be >= 0");
    const Mat a = matrix_of(sp);
    const double w2 = sp.weight_sigma * sp.weight_sigma;
    const int d = static_cast<int>(sp.dimension());
    Vec prec(d);
    for (int i = 0; i < d; ++i) prec(i) = 1.0 / (sp.prior_variances[static_cast<std::size_t>(i)] + s * s);
    const Vec mu = to_vec(sp.prior_mean);
    Mat hp = Mat::Zero(d, d);
    Vec bp = Vec::Zero(d);
    for (const auto& [g, wt] : oracle_elements(law)) {
        const Mat p = permutation_matrix(g, sp.shape);
        hp += wt * (p.transpose() * prec.asDiagonal() * p);
        bp += wt * (p.transpose() * (prec.asDiagonal() * mu));
    }
    auto impl = std::make_shared<Impl>();
    impl->shape = sp.shape;
    impl->h = a.transpose() * a / w2 + sp.lambda * hp;
    impl->b = a.transpose() * to_vec(sp.y) / w2 + sp.lambda * bp;
    AffineModel model;
    model.impl_ = std::move(impl);
    return model;
}

AffineModel AffineModel::pnp_target(const SyntheticProblem& sp, const Denoiser& linear)
{
    require(linear.kind() == DenoiserKind::LinearSmoothing, ErrorKind::Unsupported,
            "pnp targets need a LinearSmoothing denoiser");
    require(sp.shape.channels == 1, ErrorKind::Unsupported, "pnp targets are single channel");
    const int d = static_cast<int>(sp.dimension());
    const Mat wk = convolution_matrix(linear.kernel(), sp.shape);
    const Mat id = Mat::Identity(d, d);
    const Mat m = id - linear.strength() * (id - 0.5 * (wk + wk.transpose()));
    Eigen::FullPivLU<Mat> lu(m);
    require(lu.isInvertible(), ErrorKind::Degenerate, "denoiser matrix is singular");
    const Mat a = matrix_of(sp);
    const double w2 = sp.weight_sigma * sp.weight_sigma;
    auto impl = std::make_shared<Impl>();
    impl->shape = sp.shape;
    impl->h = a.transpose() * a / w2 + sp.lambda * (lu.inverse() - id);
    impl->b = a.transpose() * to_vec(sp.y) / w2;
    impl->m = m;
    AffineModel model;
    model.impl_ = std::move(impl);
    return model;
}

Image AffineModel::gradient(const Image& x) const
{
    return to_image(impl_->h * to_vec(x) - impl_->b, impl_->shape);
}

double AffineModel::objective(const Image& x) const
{
    const Vec v = to_vec(x);
    return 0.5 * v.dot(impl_->h * v) - impl_->b.dot(v);
}

Image AffineModel::critical_point() const
{
    Eigen::FullPivLU<Mat> lu(impl_->h);
    require(lu.isInvertible(), ErrorKind::Degenerate, "critical-point system is singular");
    const Vec x = lu.solve(impl_->b);
    const double res = (impl_->h * x - impl_->b).norm();
    require(res <= 1e-10 * std::max(1.0, impl_->b.norm()), ErrorKind::Numeric,
            "critical-point residual " + fmt(res) + " above 1e-10");
    return to_image(x, impl_->shape);
}

Image AffineModel::denoiser_matrix_apply(const Image& x) const
{
    require(impl_->m.size() > 0, ErrorKind::Unsupported, "model has no denoiser matrix");
    return to_image(impl_->m * to_vec(x), impl_->shape);
}

double AffineModel::smallest_eigenvalue() const
{
    const Mat sym = 0.5 * (impl_->h + impl_->h.transpose());
    return Eigen::SelfAdjointEigenSolver<Mat>(sym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

double AffineModel::largest_eigenvalue() const
{
    const Mat sym = 0.5 * (impl_->h + impl_->h.transpose());
    return Eigen::SelfAdjointEigenSolver<Mat>(sym, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

Image critical_point_closed_form(const SyntheticProblem& sp, double s, const TransformLaw& law)
{
    return AffineModel::ered_target(sp, law, s).critical_point();
}

// ---------------------------------------------------------------------------

bool CheckReport::passed() const noexcept
{
    return std::all_of(measurements.begin(), measurements.end(), [](const Measurement& m) { return m.ok; });
}

void CheckReport::add(std::string measurement, double value)
{
    measurements.push_back(Measurement{std::move(measurement), value, "", true});
}

void CheckReport::add(std::string measurement, double value, std::string bound, bool ok)
{
    measurements.push_back(Measurement{std::move(measurement), value, std::move(bound), ok});
}

std::string CheckReport::csv_rows() const
{
    std::string out;
    for (const auto& m : measurements) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", m.value);
        out += name + "," + m.name + "," + buf + "," + m.bound + "," + (m.ok ? "1" : "0") + "\n";
    }
    return out;
}

std::string CheckReport::summary() const
{
    std::string out = name + ": " + (passed() ? "PASS" : "FAIL") + " (" + std::to_string(seeds.size()) +
                      " seeds)\n";
    for (const auto& m : measurements) {
        out += "  " + m.name + " = " + fmt(m.value);
        if (!m.bound.empty()) out += "  [" + m.bound + "] " + (m.ok ? "ok" : "VIOLATED");
        out += "\n";
    }
    if (!note.empty()) out += "  note: " + note + "\n";
    return out;
}

std::vector<std::uint64_t> seed_list(std::uint64_t master, int count)
{
    std::vector<std::uint64_t> out;
    for (int i = 0; i < count; ++i) out.push_back(Rng::derive_seed(master, static_cast<std::uint64_t>(i)));
    return out;
}

// ---------------------------------------------------------------------------

CheckReport check_prop2_unbiased_convergence(const SyntheticProblem& sp, const TransformLaw& law,
                                             const Prop2Options& opt, const std::vector<std::uint64_t>& seeds)
{
    require(opt.schedule.square_summable_not_summable(), ErrorKind::Config,
            "prop2 refuses to certify: the step schedule must satisfy sum d_k = inf, sum d_k^2 < inf");
    require(opt.iterations >= 40, ErrorKind::Config, "prop2 needs at least 40 iterations");
    const AffineModel model = AffineModel::ered_target(sp, law, sp.sigma);
    const Image xs = model.critical_point();
    const Problem problem = sp.problem();
    const Image x0 = default_initialization(problem);
    const int n = opt.iterations;
    const double rate = opt.schedule.alpha() - 0.5;

    CheckReport rep;
    rep.name = "prop2_" + law.name();
    rep.seeds = seeds;
    std::vector<double> finals;
    std::vector<double> window_end;
    std::vector<double> window_quarter;
    std::vector<std::vector<double>> distances(opt.checkpoints.size());
    std::vector<double> objective_mean;
    int excluded = 0;
    auto window_mean = [](const RunTrace& t, int end) {
        const int len = std::max(1, end / 10);
        double s = 0.0;
        for (int k = end - len; k < end; ++k) s += *t.records[static_cast<std::size_t>(k)].grad_norm;
        return s / len;
    };
    for (std::uint64_t seed : seeds) {
        SolverConfig cfg;
        cfg.algorithm = Algorithm::ERED;
        cfg.schedule = opt.schedule;
        cfg.lambda = sp.lambda;
        cfg.denoiser = sp.mmse();
        cfg.law = law;
        cfg.iterations = n;
        cfg.seed = seed;
        cfg.divergence_threshold = kComplianceBox;
        TraceOptions to;
        to.gradient = [&](const Image& x) { return model.gradient(x); };
        to.objective = [&](const Image& x) { return model.objective(x); };
        std::vector<double> dist(opt.checkpoints.size(), NAN);
        to.observer = [&](int k, const Image& x) {
            for (std::size_t i = 0; i < opt.checkpoints.size(); ++i) {
                if (opt.checkpoints[i] == k) dist[i] = norm(x - xs);
            }
        };
        const RunTrace t = run(cfg, problem, x0, to);
        if (!t.ok()) {
            ++excluded;
            continue;
        }
        if (objective_mean.empty()) objective_mean.assign(t.records.size(), 0.0);
        for (std::size_t k = 0; k < t.records.size(); ++k) objective_mean[k] += *t.records[k].objective;
        finals.push_back(norm(model.gradient(t.final_image)));
        window_end.push_back(window_mean(t, n));
        window_quarter.push_back(window_mean(t, n / 4));
        for (std::size_t i = 0; i < dist.size(); ++i) distances[i].push_back(dist[i]);
    }
    const double frac_excluded = static_cast<double>(excluded) / static_cast<double>(seeds.size());
    rep.add("excluded_fraction", frac_excluded, "<= 0.05", frac_excluded <= kMaxExcludedFraction);
    const auto below = static_cast<double>(std::count_if(finals.begin(), finals.end(),
                                                         [&](double g) { return g < opt.grad_tolerance; }));
    const double frac = finals.empty() ? 0.0 : below / static_cast<double>(finals.size());
    rep.add("fraction_final_grad_below_tol", frac,
            ">= " + fmt(opt.required_fraction) + " with tol " + fmt(opt.grad_tolerance),
            frac >= opt.required_fraction);
    rep.add("median_final_grad", median_of(finals));
    rep.add("max_final_grad", finals.empty() ? NAN : *std::max_element(finals.begin(), finals.end()));

    // Uniform constant C of the rate bound, fitted at N/4 over all seeds.
    double c = 0.0;
    for (double w : window_quarter) c = std::max(c, w * std::pow(n / 4.0, rate));
    const double tol_n = c / std::pow(static_cast<double>(n), rate);
    const auto within = static_cast<double>(std::count_if(window_end.begin(), window_end.end(),
                                                          [&](double w) { return w <= tol_n; }));
    const double frac_rate = window_end.empty() ? 0.0 : within / static_cast<double>(window_end.size());
    rep.add("fitted_rate_constant", c);
    rep.add("fraction_window_within_rate", frac_rate,
            ">= " + fmt(opt.required_fraction) + " (C / N^(alpha-1/2), C fitted at N/4)",
            frac_rate >= opt.required_fraction);
    double prev = INFINITY;
    bool decreasing = true;
    for (std::size_t i = 0; i < distances.size(); ++i) {
        const double med = median_of(distances[i]);
        rep.add("median_distance_k" + std::to_string(opt.checkpoints[i]), med);
        decreasing = decreasing && med < prev;
        prev = med;
    }
    rep.add("distance_decreasing", decreasing ? 1.0 : 0.0, "= 1", decreasing);

    // Descent in expectation: seed-mean of F along k, in blocks of 10.
    double worst_rise = 0.0;
    double prev_block = INFINITY;
    for (std::size_t b = 0; b + 10 <= objective_mean.size(); b += 10) {
        double m = 0.0;
        for (std::size_t k = b; k < b + 10; ++k) m += objective_mean[k];
        m /= 10.0 * static_cast<double>(finals.size());
        if (std::isfinite(prev_block)) worst_rise = std::max(worst_rise, (m - prev_block) / std::max(1.0, std::abs(m)));
        prev_block = m;
    }
    rep.add("objective_mean_max_relative_rise", worst_rise, "<= 1e-10 (nonincreasing up to rounding)",
            worst_rise <= 1e-10);
    rep.note = "F_sigma^pi gradient from dense algebra; runs leaving the ball ||x|| <= 1e3 are excluded";
    return rep;
}

CheckReport check_prop3_bias_bound(const SyntheticProblem& sp, const TransformLaw& law,
                                   const Prop3Options& opt, const std::vector<std::uint64_t>& seeds)
{
    require(opt.schedule.square_summable_not_summable(), ErrorKind::Config,
            "prop3 refuses to certify: the step schedule must be square summable and not summable");
    require(law.enumerable(), ErrorKind::Config, "prop3 measures the bias by enumeration; law '" +
                                                     law.name() + "' is not enumerable");
    require(opt.biases.size() >= 2, ErrorKind::Config, "prop3 needs at least two bias levels");
    const AffineModel model = AffineModel::ered_target(sp, law, sp.sigma);
    const Problem problem = sp.problem();
    const Image x0 = default_initialization(problem);
    const Image u = Image::constant(sp.shape, 1.0 / std::sqrt(static_cast<double>(sp.dimension())));
    const int n = opt.iterations;
    const double scale = sp.lambda / (sp.sigma * sp.sigma);

    CheckReport rep;
    rep.name = "prop3_" + law.name();
    rep.seeds = seeds;
    std::vector<double> plateaus;
    double worst_ratio = 0.0;
    int excluded = 0;
    for (double eps : opt.biases) {
        const Denoiser biased = sp.mmse().with_offset(eps * u);
        std::vector<double> per_seed;
        for (std::uint64_t seed : seeds) {
            SolverConfig cfg;
            cfg.algorithm = Algorithm::ERED;
            cfg.schedule = opt.schedule;
            cfg.lambda = sp.lambda;
            cfg.denoiser = biased;
            cfg.law = law;
            cfg.iterations = n;
            cfg.seed = seed;
            cfg.divergence_threshold = kComplianceBox;
            TraceOptions to;
            to.gradient = [&](const Image& x) { return model.gradient(x); };
            const RunTrace t = run(cfg, problem, x0, to);
            if (!t.ok()) {
                ++excluded;
                continue;
            }
            double top = 0.0;
            for (int k = n - std::max(1, n / 10); k < n; ++k) {
                top = std::max(top, *t.records[static_cast<std::size_t>(k)].grad_norm);
            }
            per_seed.push_back(top);
        }
        plateaus.push_back(mean_of(per_seed));
        rep.add(label("plateau_eps", eps), plateaus.back());

        // E xi at a few points: the enumerated mean of the one-draw gradient
        // estimate minus the exact gradient of F_sigma^pi.
        Rng prng(Rng::derive_seed(0x9E3, static_cast<std::uint64_t>(eps * 1e9)));
        for (int p = 0; p < opt.bias_points; ++p) {
            Image x = sp.prior_mean;
            x.axpy(0.5, prng.normal_image(sp.shape));
            Image mean_est = Image::zeros(sp.shape);
            const Image gf = problem.grad_f(x);
            for (const auto& [g, w] : law.enumerate()) {
                const Image gx = g.apply(x);
                Image est = gf;
                est.axpy(scale, g.jacobian_transpose(gx - biased.denoise(gx)));
                mean_est.axpy(w, est);
            }
            const double bias = norm(mean_est - model.gradient(x));
            worst_ratio = std::max(worst_ratio, bias / (scale * eps));
        }
    }
    const double frac_excluded =
        static_cast<double>(excluded) / static_cast<double>(seeds.size() * opt.biases.size());
    rep.add("excluded_fraction", frac_excluded, "<= 0.05", frac_excluded <= kMaxExcludedFraction);
    bool monotone = true;
    for (std::size_t i = 1; i < plateaus.size(); ++i) monotone = monotone && plateaus[i] > plateaus[i - 1];
    rep.add("plateau_monotone", monotone ? 1.0 : 0.0, "= 1", monotone);
    const double slope = loglog_slope(opt.biases, plateaus);
    rep.add("plateau_loglog_slope", slope, "in [0.4, 1.1]", slope >= 0.4 && slope <= 1.1);
    if (plateaus.size() >= 2) {
        rep.add("plateau_ratio_last_two", plateaus.back() / plateaus[plateaus.size() - 2]);
    }
    rep.add("max_bias_over_bound", worst_ratio, "<= 1 + 1e-6", worst_ratio <= 1.0 + 1e-6);
    rep.note = "bias direction u is the unit constant image; bound (lambda/sigma^2) eps for isometries";
    return rep;
}

CheckReport check_prop5_score_convergence(const SyntheticProblem& sp, const TransformLaw& law,
                                          const std::vector<double>& sigmas, int grid_points)
{
    require(sigmas.size() >= 2, ErrorKind::Config, "prop5 needs at least two sigma levels");
    require_invariant_prior(sp, law);
    Rng grid_rng(0x5C0E);
    std::vector<Image> grid;
    for (int i = 0; i < grid_points; ++i) {
        const Image base = sp.gmm ? sp.gmm->means[static_cast<std::size_t>(i) % sp.gmm->means.size()] : sp.prior_mean;
        Image x = base;
        x.axpy(0.5, grid_rng.normal_image(base.shape()));
        grid.push_back(std::move(x));
    }
    const Denoiser reference = sp.mmse();
    CheckReport rep;
    rep.name = "prop5_" + law.name();
    std::vector<double> gaps;
    for (double s : sigmas) {
        const EquivariantDenoiser ed(sp.mmse(s), law, AverageMode::Exact);
        Rng unused(0);
        double gap = 0.0;
        for (const Image& x : grid) {
            gap = std::max(gap, norm(reference.prior_score(x, 0.0) - ed.score(x, unused)));
        }
        gaps.push_back(gap);
        rep.add(label("sup_gap_sigma", s), gap);
    }
    bool nonincreasing = true;
    for (std::size_t i = 1; i < gaps.size(); ++i) {
        nonincreasing = nonincreasing && gaps[i] <= gaps[i - 1];
        rep.add(label("gap_ratio_sigma", sigmas[i]), gaps[i] / gaps[i - 1]);
    }
    rep.add("gap_nonincreasing", nonincreasing ? 1.0 : 0.0, "= 1", nonincreasing);
    const double reduction = gaps.front() / gaps.back();
    rep.add("total_reduction", reduction, ">= 4", reduction >= 4.0);
    rep.note = "sup over " + std::to_string(grid_points) + " fixed points around the prior mean";
    return rep;
}

CheckReport check_prop6_critical_limit(const SyntheticProblem& sp, const TransformLaw& law,
                                       const std::vector<double>& sigmas, double final_tolerance)
{
    require(!sigmas.empty(), ErrorKind::Config, "prop6 needs sigma levels");
    require_invariant_prior(sp, law);
    const Image xstar = critical_point_closed_form(sp, 0.0, law);
    CheckReport rep;
    rep.name = "prop6_" + law.name();
    std::vector<double> dist;
    for (double s : sigmas) {
        dist.push_back(norm(critical_point_closed_form(sp, s, law) - xstar));
        rep.add(label("distance_sigma", s), dist.back());
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < dist.size(); ++i) decreasing = decreasing && dist[i] <= dist[i - 1];
    rep.add("distance_nonincreasing", decreasing ? 1.0 : 0.0, "= 1", decreasing);
    rep.add("final_distance", dist.back(), "< " + fmt(final_tolerance), dist.back() < final_tolerance);
    return rep;
}

CheckReport check_lemma1_prop8_epnp(const LinearPnpInstance& inst, const PlateauOptions& opt,
                                    const std::vector<std::uint64_t>& seeds)
{
    require_linear_instance(inst, 3.0, "lemma1/prop8");
    const SyntheticProblem& sp = inst.base;
    const AffineModel model = AffineModel::pnp_target(sp, inst.denoiser);
    const Problem problem = sp.problem();
    const Image x0 = default_initialization(problem);
    const int n = opt.iterations;

    CheckReport rep;
    rep.name = "lemma1_prop8_epnp";
    rep.seeds = seeds;
    std::vector<double> res_plateau;
    std::vector<double> grad_plateau;
    int excluded = 0;
    for (double level : opt.levels) {
        std::vector<std::vector<double>> res_runs;
        std::vector<std::vector<double>> grad_runs;
        for (std::uint64_t seed : seeds) {
            SolverConfig cfg;
            cfg.algorithm = Algorithm::EPnP;
            cfg.lambda = sp.lambda;
            cfg.denoiser = inst.denoiser;
            cfg.law = TransformLaw::gaussian_shift(level);
            cfg.iterations = n;
            cfg.seed = seed;
            cfg.divergence_threshold = kComplianceBox;
            std::vector<double> res;
            std::vector<double> grad{squared_norm(model.gradient(x0))};
            Image prev = x0;
            TraceOptions to;
            to.observer = [&](int, const Image& x) {
                res.push_back(squared_norm(x - prev));
                // x_{k+1} - zeta_{k+1} = Prox(y_k), exact since D is linear.
                Image yk = prev;
                yk.axpy(-1.0 / sp.lambda, problem.grad_f(prev));
                grad.push_back(squared_norm(model.gradient(model.denoiser_matrix_apply(yk))));
                prev = x;
            };
            const RunTrace t = run(cfg, problem, x0, to);
            if (!t.ok()) {
                ++excluded;
                continue;
            }
            grad.pop_back();
            res_runs.push_back(std::move(res));
            grad_runs.push_back(std::move(grad));
        }
        res_plateau.push_back(plateau_fit(seed_average(res_runs)).second);
        grad_plateau.push_back(plateau_fit(seed_average(grad_runs)).second);
        if (level > 0.0) {
            const double mu2 = level * level * static_cast<double>(sp.dimension());
            rep.add(label("mu2_sigma", level), mu2);
        }
    }
    const double frac_excluded =
        static_cast<double>(excluded) / static_cast<double>(seeds.size() * opt.levels.size());
    rep.add("excluded_fraction", frac_excluded, "<= 0.05", frac_excluded <= kMaxExcludedFraction);
    add_plateau_checks(rep, "residual2", opt.levels, res_plateau, opt);
    add_plateau_checks(rep, "perturbed_grad2", opt.levels, grad_plateau, opt);
    rep.add("lambda_over_lf", sp.lambda / sp.lipschitz_f());
    rep.note = "plateau b from a least-squares fit a/N + b of seed-averaged Cesaro means at N/8..N";
    return rep;
}

CheckReport check_lemma2_prop9_snopnp(const LinearPnpInstance& inst, const PlateauOptions& opt,
                                      const std::vector<std::uint64_t>& seeds)
{
    require_linear_instance(inst, 1.0, "lemma2/prop9");
    const AffineModel model = AffineModel::pnp_target(inst.base, inst.denoiser);
    const Image xstar = model.critical_point();
    CheckReport rep;
    rep.name = "lemma2_prop9_snopnp";
    rep.seeds = seeds;
    std::vector<double> grad_plateau;
    std::vector<double> res_plateau;
    int excluded = 0;
    for (double level : opt.levels) {
        std::vector<std::vector<double>> grad_runs;
        std::vector<std::vector<double>> res_runs;
        double worst_final = 0.0;
        for (std::uint64_t seed : seeds) {
            SnoPnpRun r = snopnp_run(inst, model, xstar, level, opt.iterations, seed);
            if (r.excluded) {
                ++excluded;
                continue;
            }
            worst_final = std::max(worst_final, r.final_grad);
            grad_runs.push_back(std::move(r.grad_sq));
            res_runs.push_back(std::move(r.residual_sq));
            if (level == 0.0) break;  // deterministic
        }
        grad_plateau.push_back(plateau_fit(seed_average(grad_runs)).second);
        res_plateau.push_back(plateau_fit(seed_average(res_runs)).second);
        if (level == 0.0) {
            rep.add("final_grad_sigma0", worst_final, "< 1e-6", worst_final < 1e-6);
        }
    }
    const double frac_excluded =
        static_cast<double>(excluded) / static_cast<double>(seeds.size() * opt.levels.size());
    rep.add("excluded_fraction", frac_excluded, "<= 0.05", frac_excluded <= kMaxExcludedFraction);
    add_plateau_checks(rep, "grad2", opt.levels, grad_plateau, opt);
    // residual plateau, reported only
    for (std::size_t i = 0; i < opt.levels.size(); ++i) {
        rep.add(label("residual2_plateau_sigma", opt.levels[i]), res_plateau[i]);
    }
    for (std::size_t i = 1; i < opt.levels.size(); ++i) {
        if (opt.levels[i] == 0.04 && opt.levels[i - 1] == 0.02) {
            const double ratio = grad_plateau[i] / grad_plateau[i - 1];
            rep.add("grad2_ratio_gate", ratio, "in [3, 5.5]", ratio >= 3.0 && ratio <= 5.5);
        }
    }
    rep.add("lambda_over_lf", inst.base.lambda / inst.base.lipschitz_f());
    rep.note = "the denoiser is held fixed; sigma sets the injected noise (sigma = 0: plain PGD)";
    return rep;
}

CheckReport check_cor1_distance_scaling(const LinearPnpInstance& inst, const PlateauOptions& opt,
                                        const std::vector<std::uint64_t>& seeds)
{
    require_linear_instance(inst, 1.0, "cor1");
    const AffineModel model = AffineModel::pnp_target(inst.base, inst.denoiser);
    const Image xstar = model.critical_point();
    CheckReport rep;
    rep.name = "cor1_distance_scaling";
    rep.seeds = seeds;
    std::vector<double> medians;
    std::vector<double> levels;
    for (double level : opt.levels) {
        std::vector<double> mins;
        for (std::uint64_t seed : seeds) {
            const SnoPnpRun r = snopnp_run(inst, model, xstar, level, opt.iterations, seed);
            if (!r.excluded) mins.push_back(r.min_distance);
            if (level == 0.0) break;
        }
        const double med = median_of(mins);
        if (level == 0.0) {
            rep.add("min_distance_sigma0", med, "< 1e-6", med < 1e-6);
        } else {
            rep.add(label("median_min_distance_sigma", level), med);
            medians.push_back(med);
            levels.push_back(level);
        }
    }
    bool monotone = true;
    for (std::size_t i = 1; i < medians.size(); ++i) monotone = monotone && medians[i] >= 0.9 * medians[i - 1];
    rep.add("nondecreasing_within_10pct", monotone ? 1.0 : 0.0, "= 1", monotone);
    if (medians.size() >= 2) rep.add("distance_loglog_slope", loglog_slope(levels, medians));
    rep.note = "qualitative: r and B3 are not identifiable";
    return rep;
}

// ---------------------------------------------------------------------------

Image finite_difference_gradient(const std::function<double(const Image&)>& fn, const Image& x, double h)
{
    require(h > 0.0 && std::isfinite(h), ErrorKind::Config, "finite-difference step must be > 0");
    Image g = Image::zeros_like(x);
    Image probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double fp = fn(probe);
        probe[i] = x[i] - h;
        const double fm = fn(probe);
        probe[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

std::pair<double, double> fit_inverse_plus_constant(const std::vector<double>& n, const std::vector<double>& c)
{
    require(n.size() == c.size() && n.size() >= 2, ErrorKind::Config, "fit needs at least two points");
    Mat design(static_cast<Eigen::Index>(n.size()), 2);
    Vec rhs(static_cast<Eigen::Index>(n.size()));
    for (std::size_t i = 0; i < n.size(); ++i) {
        design(static_cast<Eigen::Index>(i), 0) = 1.0 / n[i];
        design(static_cast<Eigen::Index>(i), 1) = 1.0;
        rhs(static_cast<Eigen::Index>(i)) = c[i];
    }
    const Vec sol = design.colPivHouseholderQr().solve(rhs);
    return {sol(0), sol(1)};
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2) return NAN;
    std::vector<double> lx;
    std::vector<double> ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) return NAN;
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    const double mx = mean_of(lx);
    const double my = mean_of(ly);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    return sxy / sxx;
}

const std::vector<std::string>& check_names()
{
    static const std::vector<std::string> names = {"prop2",        "prop2_identity", "prop3", "prop5", "prop6",
                                                   "lemma1_prop8", "lemma2_prop9",   "cor1"};
    return names;
}

std::vector<CheckReport> run_checks(const std::vector<std::string>& names, std::uint64_t master_seed,
                                    int seed_count)
{
    std::vector<std::string> selected;
    for (const auto& n : names) {
        if (n == "all") {
            selected.insert(selected.end(), check_names().begin(), check_names().end());
            continue;
        }
        if (std::find(check_names().begin(), check_names().end(), n) == check_names().end()) {
            std::string valid;
            for (const auto& v : check_names()) valid += (valid.empty() ? "" : ", ") + v;
            throw_error(ErrorKind::Config, "unknown check '" + n + "' (valid: all, " + valid + ")");
        }
        selected.push_back(n);
    }
    const auto seeds = seed_list(master_seed, seed_count);
    const std::vector<double> sigma_grid = {0.2, 0.1, 0.05, 0.025};
    std::vector<CheckReport> out;
    for (const auto& n : selected) {
        if (n == "prop2") {
            out.push_back(check_prop2_unbiased_convergence(default_instance(), TransformLaw::rot90(), {}, seeds));
        } else if (n == "prop2_identity") {
            Prop2Options o;
            o.grad_tolerance = 1e-6;
            out.push_back(check_prop2_unbiased_convergence(default_instance(), TransformLaw::identity(), o,
                                                           {seeds.front()}));
        } else if (n == "prop3") {
            out.push_back(check_prop3_bias_bound(default_instance(), TransformLaw::rot90(), {}, seeds));
        } else if (n == "prop5") {
            out.push_back(check_prop5_score_convergence(default_instance(), TransformLaw::identity(), sigma_grid));
        } else if (n == "prop6") {
            out.push_back(check_prop6_critical_limit(default_instance(), TransformLaw::identity(), sigma_grid));
        } else if (n == "lemma1_prop8") {
            out.push_back(check_lemma1_prop8_epnp(default_linear_instance(), {}, seeds));
        } else if (n == "lemma2_prop9") {
            out.push_back(check_lemma2_prop9_snopnp(default_linear_instance(), {}, seeds));
        } else if (n == "cor1") {
            out.push_back(check_cor1_distance_scaling(default_linear_instance(), {}, seeds));
        }
    }
    return out;
}

}  // namespace eqr

#include "ordinv/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

namespace ordinv {

namespace {

bool is_log_kind(ParamKind k) {
    return k == ParamKind::latent_variance || k == ParamKind::residual_variance || k == ParamKind::struct_variance;
}

}  // namespace

ParameterMap::ParameterMap(ConstraintSet constraints)
    : constraints_(std::move(constraints)),
      free_(constraints_.free_coordinates()),
      shape_(make_parameter_shape(constraints_)) {
    // Thresholds of an item must be all free or all tied, so ties carry over to
    // the log-gap parameterization unchanged.
    std::map<std::pair<int, int>, std::pair<int, int>> status;  // (g,j) -> (#free, #bound)
    for (const auto& c : constraints_.coordinates) {
        if (c.kind != ParamKind::threshold) continue;
        auto& st = status[{c.group, c.item}];
        if (constraints_.is_fixed(c)) throw std::invalid_argument("fixed thresholds are not supported");
        if (constraints_.find_tie(c)) {
            ++st.second;
        } else {
            ++st.first;
        }
    }
    for (const auto& [key, st] : status) {
        if (st.first > 0 && st.second > 0) throw std::invalid_argument("thresholds of an item must be tied together");
    }
    for (const auto& c : free_) {
        if (c.kind == ParamKind::residual_variance || c.kind == ParamKind::latent_intercept) {
            throw std::invalid_argument("residual variances and latent intercepts must be fixed");
        }
    }
}

ParameterMap::Transform ParameterMap::transform_of(const Coordinate& c) const {
    if (c.kind == ParamKind::threshold) return c.index == 0 ? Transform::first_threshold : Transform::threshold_gap;
    if (is_log_kind(c.kind)) return Transform::log;
    return Transform::identity;
}

Eigen::VectorXd ParameterMap::pack(const ParameterSet& params) const {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t i = 0; i < free_.size(); ++i) {
        const auto& c = free_[i];
        const double v = get_value(params, c);
        double out = v;
        switch (transform_of(c)) {
            case Transform::identity:
            case Transform::first_threshold: break;
            case Transform::log:
                if (!(v > 0.0)) throw std::invalid_argument("variance must be positive: " + to_string(c));
                out = std::log(v);
                break;
            case Transform::threshold_gap: {
                const double gap = v - get_value(params, {ParamKind::threshold, c.group, c.item, c.index - 1});
                if (!(gap > 0.0)) throw std::invalid_argument("thresholds must be increasing: " + to_string(c));
                out = std::log(gap);
                break;
            }
        }
        theta(static_cast<Eigen::Index>(i)) = out;
    }
    return theta;
}

ParameterSet ParameterMap::unpack(const Eigen::VectorXd& theta) const {
    ParameterSet p = shape_;
    // Free coordinates are in canonical order, so a gap always follows its predecessor.
    for (std::size_t i = 0; i < free_.size(); ++i) {
        const auto& c = free_[i];
        const double t = theta(static_cast<Eigen::Index>(i));
        switch (transform_of(c)) {
            case Transform::identity:
            case Transform::first_threshold: set_value(p, c, t); break;
            case Transform::log: set_value(p, c, std::exp(t)); break;
            case Transform::threshold_gap:
                set_value(p, c, get_value(p, {ParamKind::threshold, c.group, c.item, c.index - 1}) + std::exp(t));
                break;
        }
    }
    return apply_constraints(constraints_, std::move(p));
}

Eigen::VectorXd ParameterMap::pull_back(const ParameterSet& natural_gradient, const Eigen::VectorXd& theta) const {
    ParameterSet g = natural_gradient;
    for (const auto& t : constraints_.ties) {
        if (constraints_.is_fixed(t.target)) continue;
        set_value(g, t.target, get_value(g, t.target) + get_value(g, t.tied));
    }
    const ParameterSet values = unpack(theta);
    Eigen::VectorXd out(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t i = 0; i < free_.size(); ++i) {
        const auto& c = free_[i];
        double d = get_value(g, c);
        switch (transform_of(c)) {
            case Transform::identity: break;
            case Transform::log: d *= get_value(values, c); break;
            case Transform::first_threshold:
            case Transform::threshold_gap: {
                const auto& tau_grad = g.groups[static_cast<std::size_t>(c.group)].thresholds[static_cast<std::size_t>(c.item)];
                double tail = 0.0;
                for (std::size_t k = static_cast<std::size_t>(c.index); k < tau_grad.size(); ++k) tail += tau_grad[k];
                d = tail;
                if (c.index > 0) d *= std::exp(theta(static_cast<Eigen::Index>(i)));
                break;
            }
        }
        out(static_cast<Eigen::Index>(i)) = d;
    }
    return out;
}

Eigen::MatrixXd ParameterMap::jacobian(const Eigen::VectorXd& theta) const {
    const auto n = static_cast<Eigen::Index>(free_.size());
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& c = free_[static_cast<std::size_t>(r)];
        switch (transform_of(c)) {
            case Transform::identity: jac(r, r) = 1.0; break;
            case Transform::log: jac(r, r) = std::exp(theta(r)); break;
            case Transform::first_threshold:
            case Transform::threshold_gap: {
                // tau_k = theta_first + sum of exp(gap) up to k; earlier free slots of
                // the same item sit immediately before r.
                Eigen::Index col = r - c.index;
                jac(r, col) = 1.0;
                for (Eigen::Index m = col + 1; m <= r; ++m) jac(r, m) = std::exp(theta(m));
                break;
            }
        }
    }
    return jac;
}

int FitResult::free_index(const Coordinate& c) const {
    auto it = std::find(free_coordinates.begin(), free_coordinates.end(), c);
    return it == free_coordinates.end() ? -1 : static_cast<int>(it - free_coordinates.begin());
}

int FitResult::resolved_index(const Coordinate& c) const {
    if (const Tie* t = constraints.find_tie(c)) return free_index(t->target);
    return free_index(c);
}

std::optional<double> FitResult::standard_error(const Coordinate& c) const {
    const int i = resolved_index(c);
    if (i < 0 || static_cast<std::size_t>(i) >= standard_errors.size()) return std::nullopt;
    return standard_errors[static_cast<std::size_t>(i)];
}

ParameterSet starting_values(const OrdinalDataset& data, const ConstraintSet& cs) {
    ParameterSet p = make_parameter_shape(cs);
    const std::size_t n_items = cs.n_categories.size();
    constexpr double start_loading = 0.8;
    const double marginal_sd = std::sqrt(1.0 + start_loading * start_loading);
    for (std::size_t g = 0; g < p.groups.size(); ++g) {
        auto& gp = p.groups[g];
        std::fill(gp.loadings.begin(), gp.loadings.end(), start_loading);
        gp.latent_mean = 0.0;
        gp.latent_variance = 1.0;
        for (std::size_t j = 0; j < n_items; ++j) {
            const auto n_cat = static_cast<std::size_t>(cs.n_categories[j]);
            std::vector<double> counts(n_cat, 0.0);
            double total = 0.0;
            for (const auto& row : data.rows) {
                if (static_cast<std::size_t>(row.group_index) != g) continue;
                const Response y = row.responses[j];
                if (y == kMissing) continue;
                counts[static_cast<std::size_t>(y - 1)] += 1.0;
                total += 1.0;
            }
            auto& tau = gp.thresholds[j];
            double cum = 0.0;
            const double floor = 0.5 / std::max(total, 1.0);
            for (std::size_t k = 0; k + 1 < n_cat; ++k) {
                cum += counts[k];
                double prop = total > 0.0 ? cum / total : static_cast<double>(k + 1) / static_cast<double>(n_cat);
                prop = std::clamp(prop, floor, 1.0 - floor);
                tau[k] = normal_quantile(prop) * marginal_sd;
                if (k > 0 && tau[k] < tau[k - 1] + 0.05) tau[k] = tau[k - 1] + 0.05;
            }
        }
        if (gp.structural) {
            double sum = 0.0, sum2 = 0.0, n = 0.0;
            for (const auto& row : data.rows) {
                if (static_cast<std::size_t>(row.group_index) != g || !row.outcome) continue;
                sum += *row.outcome;
                sum2 += *row.outcome * *row.outcome;
                n += 1.0;
            }
            const double mean = n > 0.0 ? sum / n : 0.0;
            const double var = n > 1.0 ? (sum2 - n * mean * mean) / (n - 1.0) : 1.0;
            gp.structural->intercept = mean;
            gp.structural->slope = 0.0;
            gp.structural->residual_variance = var > 1e-8 ? var : 1.0;
        }
    }
    return apply_constraints(cs, std::move(p));
}

namespace {

struct Objective {
    const LikelihoodKernel& kernel;
    const ParameterMap& map;

    // Negative log-likelihood and its gradient; +inf for unusable points.
    double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
        if (!theta.allFinite()) return std::numeric_limits<double>::infinity();
        const ParameterSet p = map.unpack(theta);
        for (const auto& gp : p.groups) {
            for (const auto& t : gp.thresholds) {
                for (std::size_t k = 0; k < t.size(); ++k) {
                    if (!std::isfinite(t[k]) || (k > 0 && !(t[k] > t[k - 1]))) {
                        return std::numeric_limits<double>::infinity();
                    }
                }
            }
            if (!(gp.latent_variance > 0.0) || !std::isfinite(gp.latent_variance)) {
                return std::numeric_limits<double>::infinity();
            }
            if (gp.structural && !(gp.structural->residual_variance > 0.0 &&
                                   std::isfinite(gp.structural->residual_variance))) {
                return std::numeric_limits<double>::infinity();
            }
        }
        ParameterSet natural;
        const double ll = kernel.loglik_gradient(p, natural);
        if (!std::isfinite(ll)) return std::numeric_limits<double>::infinity();
        grad = -map.pull_back(natural, theta);
        if (!grad.allFinite()) return std::numeric_limits<double>::infinity();
        return -ll;
    }
};

struct BfgsOutcome {
    Eigen::VectorXd theta;
    double value = 0.0;
    Eigen::VectorXd grad;
    int iterations = 0;
    bool converged = false;
    double gradient_tolerance = 0.0;
    std::string message;
    std::vector<double> trace;
};

// Strong-Wolfe line search (bracketing then zoom with bisection-safeguarded
// cubic interpolation). Falls back to the best Armijo point when the
// curvature condition cannot be met.
bool wolfe_search(const Objective& f, const Eigen::VectorXd& x, double fx, const Eigen::VectorXd& g,
                  const Eigen::VectorXd& d, double step, Eigen::VectorXd& x_out, double& f_out,
                  Eigen::VectorXd& g_out) {
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.9;
    const double slope0 = g.dot(d);
    const Eigen::Index n = x.size();

    struct Point {
        double a = 0.0, f = 0.0, slope = 0.0;
        Eigen::VectorXd x, g;
    };
    auto probe = [&](double a) {
        Point p;
        p.a = a;
        p.x = x + a * d;
        p.g.resize(n);
        p.f = f(p.x, p.g);
        p.slope = std::isfinite(p.f) ? p.g.dot(d) : std::numeric_limits<double>::quiet_NaN();
        return p;
    };
    std::optional<Point> best;  // best point satisfying Armijo
    auto armijo = [&](const Point& p) { return std::isfinite(p.f) && p.f <= fx + c1 * p.a * slope0; };
    auto note = [&](const Point& p) {
        if (armijo(p) && (!best || p.f < best->f)) best = p;
    };
    auto finish = [&](const Point& p) {
        x_out = p.x;
        f_out = p.f;
        g_out = p.g;
        return true;
    };

    Point lo;
    lo.a = 0.0;
    lo.f = fx;
    lo.slope = slope0;
    lo.x = x;
    lo.g = g;
    Point hi;
    bool bracketed = false;
    double a = step;
    for (int i = 0; i < 30; ++i) {
        Point p = probe(a);
        note(p);
        if (!std::isfinite(p.f)) {
            // Infeasible region: shrink toward the last good point.
            hi = p;
            hi.f = std::numeric_limits<double>::infinity();
            bracketed = true;
            break;
        }
        if (!armijo(p) || (i > 0 && p.f >= lo.f)) {
            hi = p;
            bracketed = true;
            break;
        }
        if (std::abs(p.slope) <= -c2 * slope0) return finish(p);
        if (p.slope >= 0.0) {
            hi = lo;
            lo = p;
            bracketed = true;
            break;
        }
        lo = p;
        a *= 2.0;
    }
    if (!bracketed) {
        if (best) return finish(*best);
        return false;
    }

    for (int i = 0; i < 40; ++i) {
        double a_trial = 0.5 * (lo.a + hi.a);
        if (std::isfinite(hi.f) && std::isfinite(hi.slope)) {
            // Cubic interpolation between lo and hi.
            const double d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (lo.a - hi.a);
            const double disc = d1 * d1 - lo.slope * hi.slope;
            if (disc >= 0.0) {
                const double d2 = std::copysign(std::sqrt(disc), hi.a - lo.a);
                const double cand = hi.a - (hi.a - lo.a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
                const double left = std::min(lo.a, hi.a), right = std::max(lo.a, hi.a);
                const double margin = 0.1 * (right - left);
                if (std::isfinite(cand) && cand > left + margin && cand < right - margin) a_trial = cand;
            }
        }
        Point p = probe(a_trial);
        note(p);
        if (!armijo(p) || p.f >= lo.f) {
            hi = p;
            if (!std::isfinite(hi.f)) hi.f = std::numeric_limits<double>::infinity();
        } else {
            if (std::abs(p.slope) <= -c2 * slope0) return finish(p);
            if (p.slope * (hi.a - lo.a) >= 0.0) hi = lo;
            lo = p;
        }
        if (std::abs(hi.a - lo.a) < 1e-14 * std::max(1.0, lo.a)) break;
    }
    if (best) return finish(*best);
    return false;
}

BfgsOutcome minimize_bfgs(const Objective& f, Eigen::VectorXd x, const FitOptions& opt) {
    BfgsOutcome out;
    const Eigen::Index n = x.size();
    Eigen::VectorXd g(n);
    double fx = f(x, g);
    if (!std::isfinite(fx)) {
        out.theta = x;
        out.value = fx;
        out.grad = Eigen::VectorXd::Zero(n);
        out.message = "objective not finite at starting values";
        return out;
    }
    out.trace.push_back(-fx);
    if (n == 0) {
        out.theta = x;
        out.value = fx;
        out.grad = g;
        out.converged = true;
        out.message = "no free parameters";
        return out;
    }

    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    bool h_is_identity = true;
    int small_changes = 0;
    int iter = 0;
    constexpr double max_step = 5.0;
    bool stalled = false;

    for (; iter < opt.max_iterations; ++iter) {
        const double gnorm = g.lpNorm<Eigen::Infinity>();
        if (gnorm < opt.gradient_tolerance) {
            out.converged = true;
            out.gradient_tolerance = opt.gradient_tolerance;
            out.message = "gradient tolerance reached";
            break;
        }
        Eigen::VectorXd d = -h * g;
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            h.setIdentity();
            h_is_identity = true;
            d = -g;
            slope = g.dot(d);
        }
        double step = 1.0;
        const double dmax = d.lpNorm<Eigen::Infinity>();
        if (dmax * step > max_step) step = max_step / dmax;

        Eigen::VectorXd x_new(n), g_new(n);
        double f_new = std::numeric_limits<double>::infinity();
        const bool accepted = wolfe_search(f, x, fx, g, d, step, x_new, f_new, g_new);
        if (!accepted) {
            if (!h_is_identity) {
                h.setIdentity();
                h_is_identity = true;
                --iter;
                continue;
            }
            stalled = true;
            out.message = "line search failed";
            break;
        }

        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (h_is_identity) {
                h *= sy / y.squaredNorm();
                h_is_identity = false;
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd hy = h * y;
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            h += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
        }

        const double rel = (fx - f_new) / std::max(1.0, std::abs(f_new));
        x = x_new;
        g = g_new;
        fx = f_new;
        out.trace.push_back(-fx);
        small_changes = rel < opt.relative_tolerance ? small_changes + 1 : 0;
        if (small_changes >= opt.stall_window &&
            g.lpNorm<Eigen::Infinity>() <= std::max(opt.stall_gradient_floor, std::abs(fx) * 1e-8)) {
            stalled = true;
            out.message = "relative change tolerance reached";
            ++iter;
            break;
        }
    }

    const double gnorm = g.lpNorm<Eigen::Infinity>();
    if (!out.converged && (stalled || iter >= opt.max_iterations)) {
        const double loose = std::max(opt.stall_gradient_floor, std::abs(fx) * 1e-8);
        if (gnorm < opt.gradient_tolerance) {
            out.converged = true;
            out.gradient_tolerance = opt.gradient_tolerance;
        } else if (stalled && gnorm <= loose) {
            out.converged = true;
            out.gradient_tolerance = loose;
        }
        if (iter >= opt.max_iterations && !out.converged) out.message = "maximum iterations reached";
    }
    out.theta = x;
    out.value = fx;
    out.grad = g;
    out.iterations = iter;
    return out;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> numeric_hessian(const Objective& f, const Eigen::VectorXd& theta) {
    const Eigen::Index n = theta.size();
    Eigen::MatrixXd hess(n, n);
    Eigen::VectorXd g_plus(n), g_minus(n), g0(n);
    f(theta, g0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double step = 1e-5 * std::max(1.0, std::abs(theta(i)));
        Eigen::VectorXd tp = theta, tm = theta;
        tp(i) += step;
        tm(i) -= step;
        const double fp = f(tp, g_plus);
        const double fm = f(tm, g_minus);
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            hess.col(i).setConstant(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        hess.col(i) = (g_plus - g_minus) / (2.0 * step);
    }
    const Eigen::MatrixXd sym = 0.5 * (hess + hess.transpose());
    return {sym, g0};
}

}  // namespace

FitResult fit(const OrdinalDataset& dataset, const ModelSpec& spec, const FitOptions& options) {
    {
        auto issues = check_dataset(dataset, 1);
        if (!issues.empty()) throw ValidationError(std::move(issues));
    }
    const ConstraintSet cs = build_constraints(spec, dataset);
    const OrdinalDataset data = select_items(dataset, spec.item_names);
    const LikelihoodKernel kernel(data, gauss_hermite(spec.quadrature_points));
    const ParameterMap map(cs);
    const Objective objective{kernel, map};

    ParameterSet start = options.start ? apply_constraints(cs, *options.start) : starting_values(data, cs);
    const Eigen::VectorXd theta0 = map.pack(start);
    BfgsOutcome run = minimize_bfgs(objective, theta0, options);

    FitResult result;
    result.params = map.unpack(run.theta);
    result.loglik = -run.value;
    result.n_free = map.size();
    result.converged = run.converged;
    result.iterations = run.iterations;
    result.gradient_norm = run.grad.size() ? run.grad.lpNorm<Eigen::Infinity>() : 0.0;
    result.gradient_tolerance = run.gradient_tolerance;
    result.message = run.message;
    result.free_coordinates = map.free_coordinates();
    result.constraints = cs;
    result.spec_echo = spec;
    result.group_labels = dataset.groups;
    result.items = data.items;
    result.loglik_trace = std::move(run.trace);
    result.standard_errors.assign(result.n_free, std::nullopt);
    if (options.compute_standard_errors && result.converged) {
        StandardErrors se = standard_errors(result, dataset);
        result.standard_errors = std::move(se.se);
        result.covariance = std::move(se.covariance);
    }
    return result;
}

StandardErrors standard_errors(const FitResult& fit, const OrdinalDataset& dataset) {
    const OrdinalDataset data = select_items(dataset, fit.spec_echo.item_names);
    const LikelihoodKernel kernel(data, gauss_hermite(fit.spec_echo.quadrature_points));
    const ParameterMap map(fit.constraints);
    const Objective objective{kernel, map};
    const Eigen::VectorXd theta = map.pack(fit.params);
    const Eigen::Index n = theta.size();

    StandardErrors out;
    out.se.assign(static_cast<std::size_t>(n), std::nullopt);
    out.covariance = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    if (n == 0) return out;

    auto [hess, g0] = numeric_hessian(objective, theta);
    if (!hess.allFinite()) return out;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
    if (eig.info() != Eigen::Success) return out;
    const Eigen::VectorXd& vals = eig.eigenvalues();
    const Eigen::MatrixXd& vecs = eig.eigenvectors();
    const double tol = 1e-10 * std::max(1.0, vals.cwiseAbs().maxCoeff());

    // Coordinates loading on a non-positive curvature direction get no SE.
    std::vector<bool> available(static_cast<std::size_t>(n), true);
    Eigen::VectorXd inv_vals = Eigen::VectorXd::Zero(n);
    out.positive_definite = true;
    for (Eigen::Index k = 0; k < n; ++k) {
        if (vals(k) > tol) {
            inv_vals(k) = 1.0 / vals(k);
            continue;
        }
        out.positive_definite = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(vecs(i, k)) > 1e-6) available[static_cast<std::size_t>(i)] = false;
        }
    }
    const Eigen::MatrixXd cov_theta = vecs * inv_vals.asDiagonal() * vecs.transpose();
    const Eigen::MatrixXd jac = map.jacobian(theta);
    Eigen::MatrixXd cov = jac * cov_theta * jac.transpose();

    // A natural coordinate depends on every theta slot in its jacobian row.
    for (Eigen::Index r = 0; r < n; ++r) {
        bool ok = true;
        for (Eigen::Index c = 0; c < n; ++c) {
            if (jac(r, c) != 0.0 && !available[static_cast<std::size_t>(c)]) ok = false;
        }
        if (ok && cov(r, r) > 0.0) {
            out.se[static_cast<std::size_t>(r)] = std::sqrt(cov(r, r));
        } else {
            cov.row(r).setConstant(std::numeric_limits<double>::quiet_NaN());
            cov.col(r).setConstant(std::numeric_limits<double>::quiet_NaN());
        }
    }
    out.covariance = std::move(cov);
    return out;
}

double chisq_sf(double x, int df) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("chisq_sf: x must be a finite value >= 0");
    if (df < 1) throw std::invalid_argument("chisq_sf: df must be >= 1");
    if (x == 0.0) return 1.0;
    return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

LrtResult lrt_from_logliks(double loglik_restricted, double loglik_unrestricted, int delta_df) {
    if (delta_df <= 0) throw std::invalid_argument("likelihood-ratio test needs delta_df >= 1");
    LrtResult r;
    r.loglik_restricted = loglik_restricted;
    r.loglik_unrestricted = loglik_unrestricted;
    r.raw_delta_chisq = 2.0 * (loglik_unrestricted - loglik_restricted);
    r.delta_chisq = std::max(0.0, r.raw_delta_chisq);
    r.delta_df = delta_df;
    r.p_value = chisq_sf(r.delta_chisq, delta_df);
    return r;
}

LrtResult lrt(const FitResult& restricted, const FitResult& unrestricted) {
    if (!restricted.converged || !unrestricted.converged) {
        throw std::invalid_argument("likelihood-ratio test requires converged fits");
    }
    if (restricted.spec_echo.item_names != unrestricted.spec_echo.item_names ||
        !is_nested(restricted.constraints, unrestricted.constraints)) {
        throw std::invalid_argument("restricted model is not nested in the unrestricted model");
    }
    const int delta_df = static_cast<int>(unrestricted.n_free) - static_cast<int>(restricted.n_free);
    return lrt_from_logliks(restricted.loglik, unrestricted.loglik, delta_df);
}

}  // namespace ordinv

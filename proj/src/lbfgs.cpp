#include "pulseforge/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace pulseforge {
namespace {

VectorXd project(const VectorXd& x, const std::optional<Bounds>& bounds) {
    if (!bounds) return x;
    return x.cwiseMax(bounds->lower).cwiseMin(bounds->upper);
}

// Minimizer of the cubic through (a, fa, ga) and (b, fb, gb), safeguarded
// into the middle of the interval.
double cubic_step(double a, double fa, double ga, double b, double fb, double gb) {
    const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - ga * gb;
    double t = 0.5 * (a + b);
    if (disc >= 0.0) {
        const double d2 = std::copysign(std::sqrt(disc), b - a);
        const double denom = gb - ga + 2.0 * d2;
        if (denom != 0.0) t = b - (b - a) * (gb + d2 - d1) / denom;
    }
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);
    const double margin = 0.1 * (hi - lo);
    if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = 0.5 * (a + b);
    return t;
}

struct LinePoint {
    double alpha;
    double value;
    double slope;
    VectorXd x;
    VectorXd grad;
};

}  // namespace

std::string to_string(LbfgsStatus status) {
    switch (status) {
        case LbfgsStatus::gradient_converged: return "gradient_converged";
        case LbfgsStatus::step_converged: return "step_converged";
        case LbfgsStatus::max_iterations: return "max_iterations";
        case LbfgsStatus::line_search_failed: return "line_search_failed";
        case LbfgsStatus::stopped: return "stopped";
    }
    return "unknown";
}

double projected_gradient_norm(const VectorXd& x, const VectorXd& g, const std::optional<Bounds>& bounds) {
    if (g.size() == 0) return 0.0;
    return (project(x - g, bounds) - x).cwiseAbs().maxCoeff();
}

LbfgsResult minimize_lbfgs(const ValueGradientFn& fn, VectorXd x0, const LbfgsOptions& options,
                           const std::optional<Bounds>& bounds, const IterationCallback& callback) {
    const Eigen::Index n = x0.size();
    if (bounds && (bounds->lower.size() != n || bounds->upper.size() != n)) {
        throw std::invalid_argument("bounds have the wrong dimension");
    }
    LbfgsResult r;
    r.x = project(x0, bounds);
    r.gradient.resize(n);
    r.value = fn(r.x, r.gradient);
    r.evaluations = 1;
    if (!std::isfinite(r.value)) throw std::runtime_error("objective is not finite at the initial point");

    std::deque<VectorXd> s_hist;
    std::deque<VectorXd> y_hist;
    std::deque<double> rho_hist;

    for (r.iterations = 0; r.iterations < options.max_iterations;) {
        if (projected_gradient_norm(r.x, r.gradient, bounds) <= options.gradient_tolerance) {
            r.status = LbfgsStatus::gradient_converged;
            return r;
        }
        // Free set: not pinned at a bound by an outward gradient.
        Eigen::Array<bool, Eigen::Dynamic, 1> free = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, true);
        if (bounds) {
            for (Eigen::Index i = 0; i < n; ++i) {
                if ((r.x[i] <= bounds->lower[i] && r.gradient[i] > 0.0) ||
                    (r.x[i] >= bounds->upper[i] && r.gradient[i] < 0.0)) {
                    free[i] = false;
                }
            }
        }
        auto mask = [&](VectorXd v) {
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!free[i]) v[i] = 0.0;
            }
            return v;
        };

        // Two-loop recursion.
        VectorXd q = mask(r.gradient);
        const std::size_t m = s_hist.size();
        std::vector<double> alpha(m);
        for (std::size_t j = m; j-- > 0;) {
            alpha[j] = rho_hist[j] * mask(s_hist[j]).dot(q);
            q -= alpha[j] * mask(y_hist[j]);
        }
        if (m > 0) {
            const double sy = s_hist.back().dot(y_hist.back());
            const double yy = y_hist.back().squaredNorm();
            if (yy > 0.0) q *= sy / yy;
        } else {
            const double gnorm = r.gradient.cwiseAbs().maxCoeff();
            if (gnorm > 0.0) q /= std::max(1.0, gnorm);
        }
        for (std::size_t j = 0; j < m; ++j) {
            const double beta = rho_hist[j] * mask(y_hist[j]).dot(q);
            q += (alpha[j] - beta) * mask(s_hist[j]);
        }
        VectorXd dir = -mask(q);
        double slope0 = r.gradient.dot(dir);
        if (!(slope0 < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = -mask(r.gradient);
            slope0 = r.gradient.dot(dir);
            if (!(slope0 < 0.0)) {
                r.status = LbfgsStatus::gradient_converged;
                return r;
            }
        }

        double alpha_max = std::numeric_limits<double>::infinity();
        if (bounds) {
            for (Eigen::Index i = 0; i < n; ++i) {
                if (dir[i] > 0.0) alpha_max = std::min(alpha_max, (bounds->upper[i] - r.x[i]) / dir[i]);
                if (dir[i] < 0.0) alpha_max = std::min(alpha_max, (bounds->lower[i] - r.x[i]) / dir[i]);
            }
        }

        auto evaluate = [&](double a) {
            LinePoint p;
            p.alpha = a;
            p.x = project(r.x + a * dir, bounds);
            p.grad.resize(n);
            p.value = fn(p.x, p.grad);
            ++r.evaluations;
            p.slope = p.grad.dot(dir);
            return p;
        };

        // Strong-Wolfe search (bracketing then zoom).
        const double f0 = r.value;
        LinePoint prev{0.0, f0, slope0, r.x, r.gradient};
        double a = std::min(1.0, alpha_max);
        std::optional<LinePoint> accepted;
        std::optional<LinePoint> best;
        auto keep_best = [&](const LinePoint& p) {
            if (std::isfinite(p.value) && p.value < f0 + options.wolfe_c1 * p.alpha * slope0 &&
                (!best || p.value < best->value)) {
                best = p;
            }
        };
        std::optional<LinePoint> lo;
        std::optional<LinePoint> hi;
        for (int ls = 0; ls < options.max_line_search && !accepted; ++ls) {
            if (!lo) {
                LinePoint p = evaluate(a);
                keep_best(p);
                if (!std::isfinite(p.value) || p.value > f0 + options.wolfe_c1 * a * slope0 ||
                    (ls > 0 && p.value >= prev.value)) {
                    lo = prev;
                    hi = p;
                    continue;
                }
                if (std::abs(p.slope) <= -options.wolfe_c2 * slope0) {
                    accepted = p;
                    break;
                }
                if (p.slope >= 0.0) {
                    lo = p;
                    hi = prev;
                    continue;
                }
                if (a >= alpha_max) {
                    accepted = p;  // stopped by a bound with sufficient decrease
                    break;
                }
                prev = p;
                a = std::min(2.0 * a, alpha_max);
            } else {
                double t;
                if (std::isfinite(hi->value)) {
                    t = cubic_step(lo->alpha, lo->value, lo->slope, hi->alpha, hi->value, hi->slope);
                } else {
                    t = 0.5 * (lo->alpha + hi->alpha);
                }
                if (std::abs(hi->alpha - lo->alpha) <= 1e-16 * std::max(1.0, lo->alpha)) break;
                LinePoint p = evaluate(t);
                keep_best(p);
                if (!std::isfinite(p.value) || p.value > f0 + options.wolfe_c1 * t * slope0 || p.value >= lo->value) {
                    hi = p;
                } else {
                    if (std::abs(p.slope) <= -options.wolfe_c2 * slope0) {
                        accepted = p;
                        break;
                    }
                    if (p.slope * (hi->alpha - lo->alpha) >= 0.0) hi = lo;
                    lo = p;
                }
            }
        }
        if (!accepted) accepted = best;
        if (!accepted) {
            // The bracket shrank below the step tolerance and the trial values
            // differ from f0 only by rounding: no resolvable step remains. A
            // wrong gradient instead shows a clear increase and is reported.
            const double noise = 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f0));
            const bool collapsed = lo && hi && std::isfinite(hi->value) && std::abs(hi->value - f0) <= noise &&
                                   std::abs(hi->alpha - lo->alpha) * dir.cwiseAbs().maxCoeff() <= options.step_tolerance;
            r.status = collapsed ? LbfgsStatus::step_converged : LbfgsStatus::line_search_failed;
            return r;
        }

        const VectorXd s = accepted->x - r.x;
        const VectorXd y = accepted->grad - r.gradient;
        r.x = accepted->x;
        r.value = accepted->value;
        r.gradient = accepted->grad;
        ++r.iterations;

        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > options.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        if (callback && !callback(r.iterations, r.x, r.value, r.gradient)) {
            r.status = LbfgsStatus::stopped;
            return r;
        }
        if (s.cwiseAbs().maxCoeff() <= options.step_tolerance) {
            r.status = LbfgsStatus::step_converged;
            return r;
        }
    }
    r.status = projected_gradient_norm(r.x, r.gradient, bounds) <= options.gradient_tolerance
                   ? LbfgsStatus::gradient_converged
                   : LbfgsStatus::max_iterations;
    return r;
}

}  // namespace pulseforge

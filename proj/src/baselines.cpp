#include "nametune/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace nametune {

namespace {

constexpr int kLbfgsHistory = 10;
constexpr int kLbfgsMaxIter = 1000;
constexpr double kGradTol = 1e-6;
constexpr double kWolfeC1 = 1e-4;
constexpr double kWolfeC2 = 0.9;

// Objective over flat parameters [W row-major | bias].
struct ProbeProblem {
    std::span<const LabeledEmbedding> examples;
    int n_classes;
    std::size_t dim;  // embedding width
    double lambda;

    std::size_t size() const { return static_cast<std::size_t>(n_classes) * (dim + 1); }

    double value_and_grad(const std::vector<double>& theta, std::vector<double>* grad) const {
        const auto n = static_cast<std::size_t>(n_classes);
        const double* w = theta.data();
        const double* b = theta.data() + n * dim;
        if (grad) std::fill(grad->begin(), grad->end(), 0.0);

        double total = 0.0;
        std::vector<double> logits(n);
        for (const auto& item : examples) {
            for (std::size_t c = 0; c < n; ++c) {
                double acc = b[c];
                const double* wc = w + c * dim;
                for (std::size_t j = 0; j < dim; ++j) acc += wc[j] * item.embedding[j];
                logits[c] = acc;
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double sum = 0.0;
            for (double& v : logits) {
                v = std::exp(v - mx);
                sum += v;
            }
            total -= std::log(logits[static_cast<std::size_t>(item.label)] / sum);
            if (grad) {
                double* gw = grad->data();
                double* gb = grad->data() + n * dim;
                for (std::size_t c = 0; c < n; ++c) {
                    const double p = logits[c] / sum;
                    const double coeff = p - (static_cast<int>(c) == item.label ? 1.0 : 0.0);
                    gb[c] += coeff;
                    double* gwc = gw + c * dim;
                    for (std::size_t j = 0; j < dim; ++j) gwc[j] += coeff * item.embedding[j];
                }
            }
        }
        for (std::size_t i = 0; i < n * dim; ++i) {
            total += 0.5 * lambda * theta[i] * theta[i];
            if (grad) (*grad)[i] += lambda * theta[i];
        }
        return total;
    }
};

double vdot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

// Strong-Wolfe line search (bracket + zoom). Returns the accepted step and
// fills theta/f/g at that step.
bool wolfe_line_search(const ProbeProblem& problem, const std::vector<double>& theta0, double f0,
                       const std::vector<double>& g0, const std::vector<double>& direction,
                       std::vector<double>& theta, double& f, std::vector<double>& g) {
    const double d0 = vdot(g0, direction);
    if (d0 >= 0.0) return false;  // not a descent direction

    const auto eval = [&](double step) {
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = theta0[i] + step * direction[i];
        f = problem.value_and_grad(theta, &g);
        return vdot(g, direction);
    };

    const auto zoom = [&](double lo, double f_lo, double hi) -> bool {
        for (int it = 0; it < 64; ++it) {
            const double step = 0.5 * (lo + hi);
            const double d = eval(step);
            if (f > f0 + kWolfeC1 * step * d0 || f >= f_lo) {
                hi = step;
            } else {
                if (std::abs(d) <= -kWolfeC2 * d0) return true;
                if (d * (hi - lo) >= 0.0) hi = lo;
                lo = step;
                f_lo = f;
            }
            if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
        }
        eval(lo > 0.0 ? lo : hi);
        return f < f0;
    };

    double prev_step = 0.0, prev_f = f0;
    double step = 1.0;
    for (int it = 0; it < 32; ++it) {
        const double d = eval(step);
        if (f > f0 + kWolfeC1 * step * d0 || (it > 0 && f >= prev_f))
            return zoom(prev_step, prev_f, step);
        if (std::abs(d) <= -kWolfeC2 * d0) return true;
        if (d >= 0.0) return zoom(step, f, prev_step);
        prev_step = step;
        prev_f = f;
        step *= 2.0;
    }
    return f < f0;
}

int argmax_lowest(const std::vector<double>& scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return static_cast<int>(best);
}

Vector normalized_or_throw(const Vector& v, const char* what) {
    const double norm = l2_norm(v);
    if (norm == 0.0) throw DegenerateInputError(std::string(what) + ": zero-norm vector");
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
    return out;
}

}  // namespace

std::vector<double> geometric_grid(double lo, double hi, int count) {
    if (count < 1) throw ConfigError("geometric_grid: count must be >= 1");
    if (!(lo > 0.0) || !(hi > 0.0)) throw ConfigError("geometric_grid: bounds must be positive");
    if (count == 1) return {lo};
    std::vector<double> out(static_cast<std::size_t>(count));
    const double ratio = std::log(hi / lo) / static_cast<double>(count - 1);
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = lo * std::exp(ratio * i);
    return out;
}

LinearProbeModel linear_probe_fit(std::span<const LabeledEmbedding> examples, int n_classes,
                                  double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("linear probe: lambda must be > 0");
    if (examples.empty()) throw ConfigError("linear probe: no training examples");
    std::set<int> present;
    for (const auto& e : examples) {
        if (e.label < 0 || e.label >= n_classes)
            throw ConfigError("linear probe: label " + std::to_string(e.label) + " outside 0.." +
                              std::to_string(n_classes - 1));
        present.insert(e.label);
    }
    if (present.size() < 2)
        throw ConfigError("linear probe: need examples from at least two classes");

    ProbeProblem problem{examples, n_classes, examples.front().embedding.size(), lambda};
    std::vector<double> theta(problem.size(), 0.0);
    std::vector<double> grad(problem.size());
    double f = problem.value_and_grad(theta, &grad);

    std::vector<std::vector<double>> s_hist, y_hist;
    std::vector<double> rho_hist;

    std::vector<double> direction(problem.size());
    std::vector<double> theta_next(problem.size());
    std::vector<double> grad_next(problem.size());

    for (int iter = 0; iter < kLbfgsMaxIter; ++iter) {
        if (std::sqrt(vdot(grad, grad)) <= kGradTol) break;

        // two-loop recursion
        for (std::size_t i = 0; i < direction.size(); ++i) direction[i] = -grad[i];
        const int hist = static_cast<int>(s_hist.size());
        std::vector<double> alpha(static_cast<std::size_t>(hist));
        for (int i = hist - 1; i >= 0; --i) {
            const auto ui = static_cast<std::size_t>(i);
            alpha[ui] = rho_hist[ui] * vdot(s_hist[ui], direction);
            for (std::size_t j = 0; j < direction.size(); ++j)
                direction[j] -= alpha[ui] * y_hist[ui][j];
        }
        if (hist > 0) {
            const auto last = static_cast<std::size_t>(hist - 1);
            const double gamma =
                vdot(s_hist[last], y_hist[last]) / vdot(y_hist[last], y_hist[last]);
            for (double& v : direction) v *= gamma;
        }
        for (int i = 0; i < hist; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const double beta = rho_hist[ui] * vdot(y_hist[ui], direction);
            for (std::size_t j = 0; j < direction.size(); ++j)
                direction[j] += (alpha[ui] - beta) * s_hist[ui][j];
        }

        double f_next = f;
        theta_next = theta;
        grad_next = grad;
        if (!wolfe_line_search(problem, theta, f, grad, direction, theta_next, f_next, grad_next))
            break;

        std::vector<double> s(problem.size()), y(problem.size());
        for (std::size_t j = 0; j < problem.size(); ++j) {
            s[j] = theta_next[j] - theta[j];
            y[j] = grad_next[j] - grad[j];
        }
        const double sy = vdot(s, y);
        if (sy > 1e-12) {
            if (static_cast<int>(s_hist.size()) == kLbfgsHistory) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho_hist.erase(rho_hist.begin());
            }
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
        }
        theta.swap(theta_next);
        grad.swap(grad_next);
        f = f_next;
    }

    LinearProbeModel model;
    model.lambda = lambda;
    model.weight = Matrix(static_cast<std::size_t>(n_classes), problem.dim);
    model.bias.assign(static_cast<std::size_t>(n_classes), 0.0);
    for (std::size_t c = 0; c < static_cast<std::size_t>(n_classes); ++c) {
        for (std::size_t j = 0; j < problem.dim; ++j) model.weight(c, j) = theta[c * problem.dim + j];
        model.bias[c] = theta[static_cast<std::size_t>(n_classes) * problem.dim + c];
    }
    return model;
}

double linear_probe_objective(const LinearProbeModel& model,
                              std::span<const LabeledEmbedding> examples) {
    const auto n = model.weight.rows();
    const auto dim = model.weight.cols();
    std::vector<double> theta(n * (dim + 1));
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t j = 0; j < dim; ++j) theta[c * dim + j] = model.weight(c, j);
        theta[n * dim + c] = model.bias[c];
    }
    ProbeProblem problem{examples, static_cast<int>(n), dim, model.lambda};
    return problem.value_and_grad(theta, nullptr);
}

int linear_probe_predict(const LinearProbeModel& model, const Vector& x) {
    std::vector<double> scores(model.weight.rows());
    for (std::size_t c = 0; c < model.weight.rows(); ++c)
        scores[c] = dot(model.weight.row(c), std::span<const double>(x)) + model.bias[c];
    return argmax_lowest(scores);
}

VLPrototypeModel vl_prototype_build(const ClassifierHead& head,
                                    const std::vector<std::vector<Vector>>& support_per_class,
                                    double text_weight) {
    if (!(text_weight > 0.0)) throw ConfigError("vl prototype: text weight must be > 0");
    if (support_per_class.size() != head.size())
        throw ConfigError("vl prototype: support class count " +
                          std::to_string(support_per_class.size()) + " != head classes " +
                          std::to_string(head.size()));

    VLPrototypeModel model;
    model.text_weight = text_weight;
    model.space = head.space;
    model.prototypes = Matrix(head.size(), head.class_text_embeddings.cols());
    for (std::size_t c = 0; c < head.size(); ++c) {
        if (support_per_class[c].empty())
            throw ConfigError("vl prototype: class " + std::to_string(c) + " has empty support");
        const auto row = head.class_text_embeddings.row(c);
        const Vector text = normalized_or_throw(Vector(row.begin(), row.end()), "vl prototype text");

        Vector visual(model.prototypes.cols(), 0.0);
        for (const auto& v : support_per_class[c]) {
            const Vector unit = normalized_or_throw(v, "vl prototype support");
            for (std::size_t j = 0; j < visual.size(); ++j) visual[j] += unit[j];
        }
        const double inv = 1.0 / static_cast<double>(support_per_class[c].size());

        Vector combined(visual.size());
        for (std::size_t j = 0; j < visual.size(); ++j)
            combined[j] = text_weight * text[j] + visual[j] * inv;
        const Vector proto = normalized_or_throw(combined, "vl prototype");
        std::copy(proto.begin(), proto.end(), model.prototypes.row(c).begin());
    }
    return model;
}

int vl_prototype_predict(const VLPrototypeModel& model, const Vector& x) {
    std::vector<double> scores(model.prototypes.rows());
    for (std::size_t c = 0; c < model.prototypes.rows(); ++c)
        scores[c] = similarity_score(model.space, x, model.prototypes.row(c));
    return argmax_lowest(scores);
}

}  // namespace nametune

#include "eprobust/uncertainty.hpp"

#include <algorithm>
#include <cmath>

namespace eprobust {

Interval wilson_interval(Index k, Index n, double z) {
    if (n <= 0) return {0.0, 1.0};
    const double p = double(k) / double(n), z2 = z * z, nn = double(n);
    const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
    const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

DisagreementCurve make_curve(Norm norm, std::span<const double> eps, std::span<const Index> disagreements,
                             std::span<const Index> trials) {
    if (eps.size() != disagreements.size() || eps.size() != trials.size())
        throw UncertaintyError("make_curve: epsilon, disagreement and trial counts differ in length");
    DisagreementCurve c;
    c.norm = norm;
    for (std::size_t k = 0; k < eps.size(); ++k) {
        if (disagreements[k] < 0 || disagreements[k] > trials[k])
            throw UncertaintyError("make_curve: disagreements outside [0, trials]");
        DisagreementCell cell;
        cell.epsilon = eps[k];
        cell.disagreements = disagreements[k];
        cell.trials = trials[k];
        cell.rate = trials[k] ? double(disagreements[k]) / double(trials[k]) : 0.0;
        cell.ci = wilson_interval(disagreements[k], trials[k]);
        c.cells.push_back(cell);
    }
    return c;
}

namespace {

struct LineFit {
    double slope, intercept, rms;
    Index used;
    double lo, hi;
};

bool fit_line(std::span<const double> eps, std::span<const double> rate, LineFit& out) {
    std::vector<double> lx, ly;
    double lo = 0, hi = 0;
    for (std::size_t k = 0; k < eps.size(); ++k) {
        if (!(rate[k] > 0.0 && rate[k] < 1.0)) continue;
        if (lx.empty()) lo = eps[k];
        hi = eps[k];
        lx.push_back(std::log(eps[k]));
        ly.push_back(std::log(rate[k]));
    }
    if (lx.size() < 3) return false;
    MatrixX<double> A(Index(lx.size()), 2);
    VectorX<double> b(Index(lx.size()));
    for (std::size_t k = 0; k < lx.size(); ++k) {
        A(Index(k), 0) = lx[k];
        A(Index(k), 1) = 1.0;
        b[Index(k)] = ly[k];
    }
    const VectorX<double> sol = A.colPivHouseholderQr().solve(b);
    out = {sol[0], sol[1], std::sqrt((A * sol - b).squaredNorm() / double(lx.size())), Index(lx.size()), lo, hi};
    return true;
}

}  // namespace

ExponentFit fit_exponent(const DisagreementCurve& curve) {
    ExponentFit f;
    for (const auto& c : curve.cells) {
        f.epsilon.push_back(c.epsilon);
        f.rate.push_back(c.rate);
        f.ci.push_back(c.ci);
    }
    LineFit line;
    if (!fit_line(f.epsilon, f.rate, line)) {
        Index interior = 0;
        for (double r : f.rate) interior += r > 0.0 && r < 1.0;
        throw UncertaintyError("fit_exponent: only " + std::to_string(interior) +
                               " epsilon cells have a disagreement rate strictly between 0 and 1; at least 3 are "
                               "needed, widen the epsilon grid or add samples");
    }
    f.alpha = line.slope;
    f.intercept = line.intercept;
    f.residual = line.rms;
    f.cells_used = line.used;
    f.fit_lo = line.lo;
    f.fit_hi = line.hi;
    return f;
}

BootstrapResult bootstrap_exponent(const DisagreementCurve& curve, Index replicates, std::uint64_t seed,
                                   double level) {
    std::mt19937_64 rng(seed);
    std::vector<double> eps, alphas;
    for (const auto& c : curve.cells) eps.push_back(c.epsilon);
    std::vector<double> rate(eps.size());
    for (Index r = 0; r < replicates; ++r) {
        for (std::size_t k = 0; k < eps.size(); ++k) {
            const auto& c = curve.cells[k];
            std::binomial_distribution<Index> draw(c.trials, c.rate);
            rate[k] = c.trials ? double(draw(rng)) / double(c.trials) : 0.0;
        }
        LineFit line;
        if (fit_line(eps, rate, line)) alphas.push_back(line.slope);
    }
    BootstrapResult out;
    out.replicates_used = Index(alphas.size());
    if (alphas.empty()) throw UncertaintyError("bootstrap_exponent: no replicate had 3 interior cells");
    std::sort(alphas.begin(), alphas.end());
    const auto q = [&](double p) {
        const double pos = p * double(alphas.size() - 1);
        const std::size_t i = std::size_t(pos);
        const double f = pos - double(i);
        return i + 1 < alphas.size() ? alphas[i] * (1 - f) + alphas[i + 1] * f : alphas[i];
    };
    out.alpha = {q((1 - level) / 2), q((1 + level) / 2)};
    return out;
}

double ball_cap_probability(double margin, double eps, Index dim) {
    margin = std::abs(margin);
    if (eps <= margin) return 0.0;
    if (dim < 1) throw UncertaintyError("ball_cap_probability: dim must be >= 1");
    // The coordinate along the normal, scaled by eps, has density
    // proportional to (1 - t^2)^((dim - 1) / 2) on [-1, 1].
    const double power = 0.5 * double(dim - 1);
    const auto integral = [&](double a) {
        // Simpson on [a, 1] with t = 1 - u^2 to tame the endpoint
        const int n = 2000;
        const double ua = std::sqrt(std::max(0.0, 1.0 - a)), h = ua / n;
        double s = 0;
        for (int i = 0; i <= n; ++i) {
            const double u = i * h, t = 1 - u * u;
            const double v = std::pow(std::max(0.0, 1 - t * t), power) * 2 * u;
            s += v * (i == 0 || i == n ? 1 : i % 2 ? 4 : 2);
        }
        return s * h / 3;
    };
    return integral(margin / eps) / (2 * integral(0.0));
}

}  // namespace eprobust

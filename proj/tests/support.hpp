#pragma once

// Shared fixtures and test-only reference implementations.

#include "tspca/pca.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <sstream>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

namespace testing {

inline std::string data_path(const std::string& name) { return std::string(TSPCA_DATA_DIR) + "/" + name; }

inline const tspca::PowerSystem& ieee14() {
    static const tspca::PowerSystem sys = tspca::load_system(data_path("ieee14.txt"));
    return sys;
}

struct StudyCase {
    const char* name;
    int fault_bus;
    const char* cleared_line;
    double threshold;
};

inline const StudyCase case_one{"I", 1, "1-5", 0.975};
inline const StudyCase case_two{"II", 9, "4-9", 0.95};
inline const StudyCase case_three{"III", 2, "2-5", 0.99};

inline tspca::FaultScenario scenario(const StudyCase& c) { return tspca::FaultScenario{c.fault_bus, c.cleared_line, 2.0, 5.0}; }

/// Cyclic Jacobi rotations for a symmetric matrix; eigenvalues descending.
inline tspca::Eigendecomposition jacobi_eigen(Eigen::MatrixXd a, double tol = 1e-15, int sweeps = 100) {
    const auto n = a.rows();
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) <= tol * a.norm()) break;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) > a(y, y); });
    tspca::Eigendecomposition out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
    }
    return out;
}

// Two machines joined by line 1-2 (reactance xa), with a radial stub 1-3
// (reactance xc) whose far end takes the fault. Everything is lossless and
// both terminal voltages are 1 pu, so the whole study has closed forms.
struct TwoMachine {
    double p = 0.8;
    double xa = 0.4;
    double xc = 0.15;
    double x1 = 0.3;
    double x2 = 0.2;
    double h1 = 3.0;
    double h2 = 6.0;
    double frequency = 60.0;

    [[nodiscard]] std::string text() const {
        auto num = [](double v) {
            std::ostringstream os;
            os.precision(17);
            os << v;
            return os.str();
        };
        return "[base]\nbase: mva=100, frequency=" + num(frequency) +
               "\n[buses]\nbus: id=1, type=pv, v=1.0\nbus: id=2, type=slack, v=1.0\nbus: id=3, type=pq\n"
               "[lines]\nline: from=1, to=2, r=0, x=" +
               num(xa) + ", b2=0\nline: from=1, to=3, r=0, x=" + num(xc) +
               ", b2=0\n[generators]\ngenerator: bus=1, h=" + num(h1) + ", d=0, xd=" + num(x1) + ", p=" + num(p) +
               "\ngenerator: bus=2, h=" + num(h2) + ", d=0, xd=" + num(x2) + ", p=0\n";
    }

    [[nodiscard]] double ws() const { return 2.0 * std::numbers::pi * frequency; }
    [[nodiscard]] double m1() const { return 2.0 * h1; }
    [[nodiscard]] double m2() const { return 2.0 * h2; }
    [[nodiscard]] double theta() const { return std::asin(p * xa); }
    [[nodiscard]] std::complex<double> v1() const { return std::polar(1.0, theta()); }
    [[nodiscard]] std::complex<double> e1() const { return v1() + x1 * (v1() - 1.0) / xa; }
    [[nodiscard]] std::complex<double> e2() const { return 1.0 + x2 * (1.0 - v1()) / xa; }
    [[nodiscard]] double x_intact() const { return x1 + xa + x2; }
    [[nodiscard]] double x_faulted() const { return x1 + (xa + x2) + x1 * (xa + x2) / xc; }
    [[nodiscard]] double k_intact() const { return std::abs(e1()) * std::abs(e2()) / x_intact(); }
    [[nodiscard]] double k_faulted() const { return std::abs(e1()) * std::abs(e2()) / x_faulted(); }

    // d/dxa of the fault-on transfer coefficient and of the initial angles.
    [[nodiscard]] double dtheta() const { return p / std::cos(theta()); }
    [[nodiscard]] std::complex<double> de1() const {
        const std::complex<double> j(0.0, 1.0);
        return j * v1() * dtheta() * (1.0 + x1 / xa) - x1 * (v1() - 1.0) / (xa * xa);
    }
    [[nodiscard]] std::complex<double> de2() const {
        const std::complex<double> j(0.0, 1.0);
        return -x2 * j * v1() * dtheta() / xa - x2 * (1.0 - v1()) / (xa * xa);
    }
    [[nodiscard]] double dk_faulted() const {
        const auto a1 = std::abs(e1());
        const auto a2 = std::abs(e2());
        const double da1 = std::real(de1() * std::conj(e1())) / a1;
        const double da2 = std::real(de2() * std::conj(e2())) / a2;
        const double xf = x_faulted();
        return (da1 * a2 + a1 * da2) / xf - a1 * a2 * (1.0 + x1 / xc) / (xf * xf);
    }

    struct Sample {
        double t;
        double coi[2];  // δ_i - δ_COI
        double dcoi[2]; // d/dxa of the same
    };

    /// Fault-on run with the forward variational equations, fine-step RK4,
    /// reported at the requested times.
    [[nodiscard]] std::vector<Sample> fault_on(const std::vector<double>& times, double h = 1e-5) const {
        const double k = k_faulted();
        const double dk = dk_faulted();
        const double w = ws();
        const double ma = m1();
        const double mb = m2();
        using State = std::array<double, 8>; // δ1 δ2 ω1 ω2 and their xa derivatives
        auto f = [&](const State& s) {
            const double d = s[0] - s[1];
            const double dd = s[4] - s[5];
            const double pe = k * std::sin(d);
            const double dpe = dk * std::sin(d) + k * std::cos(d) * dd;
            return State{w * s[2], w * s[3], (p - pe) / ma, (-p + pe) / mb, w * s[6], w * s[7], -dpe / ma, dpe / mb};
        };
        State s{std::arg(e1()), std::arg(e2()), 0, 0, std::imag(de1() / e1()), std::imag(de2() / e2()), 0, 0};
        std::vector<Sample> out;
        double t = 0.0;
        for (double target : times) {
            while (t < target - 1e-15) {
                const double step = std::min(h, target - t);
                const auto k1 = f(s);
                State tmp;
                for (int i = 0; i < 8; ++i) tmp[i] = s[i] + 0.5 * step * k1[i];
                const auto k2 = f(tmp);
                for (int i = 0; i < 8; ++i) tmp[i] = s[i] + 0.5 * step * k2[i];
                const auto k3 = f(tmp);
                for (int i = 0; i < 8; ++i) tmp[i] = s[i] + step * k3[i];
                const auto k4 = f(tmp);
                for (int i = 0; i < 8; ++i) s[i] += step / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
                t += step;
            }
            const double share1 = mb / (ma + mb);
            const double share2 = ma / (ma + mb);
            out.push_back(Sample{t, {share1 * (s[0] - s[1]), -share2 * (s[0] - s[1])}, {share1 * (s[4] - s[5]), -share2 * (s[4] - s[5])}});
        }
        return out;
    }

    /// Equal-area critical angle and the fault-on time needed to reach it.
    [[nodiscard]] double critical_angle() const {
        const double kp = k_intact();
        const double kf = k_faulted();
        const double d0 = std::asin(p / kp);
        const double dmax = std::numbers::pi - d0;
        return std::acos((p * (dmax - d0) + kp * std::cos(dmax) - kf * std::cos(d0)) / (kp - kf));
    }

    [[nodiscard]] double critical_clearing_time(double h = 1e-6) const {
        const double kf = k_faulted();
        const double c = ws() * (1.0 / m1() + 1.0 / m2());
        const double target = critical_angle();
        double d = std::asin(p / k_intact());
        double v = 0.0;
        double t = 0.0;
        for (;;) {
            auto acc = [&](double x) { return c * (p - kf * std::sin(x)); };
            const double k1d = v, k1v = acc(d);
            const double k2d = v + 0.5 * h * k1v, k2v = acc(d + 0.5 * h * k1d);
            const double k3d = v + 0.5 * h * k2v, k3v = acc(d + 0.5 * h * k2d);
            const double k4d = v + h * k3v, k4v = acc(d + h * k3d);
            const double dn = d + h / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d);
            const double vn = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
            if (dn >= target) return t + h * (target - d) / (dn - d);
            d = dn;
            v = vn;
            t += h;
        }
    }
};

} // namespace testing

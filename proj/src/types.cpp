#include "mtebounds/types.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace mte {

void MisclassSpec::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("misclass.alpha outside [0,1]");
    if (kind == MisclassKind::CopulaDependent && !(rho >= -1.0 && rho <= 1.0))
        throw std::invalid_argument("misclass.rho outside [-1,1]");
}

void DgpSpec::sync_rho() {
    const double r = misclass.rho;
    cov[2][3] = cov[3][2] = r;
    // The (beta, U, Vstar) block makes beta - U + Vstar degenerate, so the
    // xistar covariances must satisfy cov(xi,beta) - cov(xi,U) + rho = 0.
    // This choice keeps every moment the closed forms use and reduces to the
    // baseline 0.5/0.5 pair at rho = 0.
    cov[0][3] = cov[3][0] = 0.5 - 0.5 * r;
    cov[1][3] = cov[3][1] = 0.5 + 0.5 * r;
}

void DgpSpec::validate() const {
    misclass.validate();
    if (n <= 0) throw std::invalid_argument("dgp.n must be positive");
    if (misclass.kind == MisclassKind::CopulaDependent &&
        std::fabs(cov[2][3] - misclass.rho) > 1e-12)
        throw std::invalid_argument("dgp.cov (Vstar,xistar) entry disagrees with misclass.rho; call sync_rho()");
    if (pscore_map != "phi_2z") throw std::invalid_argument("dgp.pscore_map: unknown tag '" + pscore_map + "'");
    Eigen::Matrix<double, 5, 5> sigma;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) sigma(i, j) = cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    if (!sigma.isApprox(sigma.transpose(), 1e-12))
        throw std::invalid_argument("dgp.cov must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 5, 5>> es(sigma);
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw std::invalid_argument("dgp.cov must be positive semidefinite");
}

double DgpSpec::pscore(double z) const {
    return std_normal_cdf(2.0 * z);
}

IdentConfig validate(const IdentConfig& config) {
    if (!(config.alpha_bar >= 0.0 && config.alpha_bar <= 1.0))
        throw std::invalid_argument("alpha_bar outside [0,1]");
    if (config.alpha_grid_size < 1)
        throw std::invalid_argument("alpha_grid_size must be at least 1");
    if (!(config.bandwidth > 0.0))
        throw std::invalid_argument("bandwidth must be positive");
    if (!(config.fd_step > 0.0))
        throw std::invalid_argument("fd_step must be positive");
    if (config.y_bins < 1)
        throw std::invalid_argument("y_bins must be at least 1");
    if (!(config.trim_delta >= 0.0 && config.trim_delta < 0.5))
        throw std::invalid_argument("trim_delta outside [0, 0.5)");
    return config;
}

std::vector<double> default_alpha_grid(double alpha_bar, int size) {
    if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0))
        throw std::invalid_argument("alpha_bar outside [0,1]");
    if (size < 1) throw std::invalid_argument("alpha grid size must be at least 1");
    if (size == 1 || alpha_bar == 0.0) return {0.0};
    std::vector<double> grid(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i)
        grid[static_cast<std::size_t>(i)] = alpha_bar * static_cast<double>(i) / static_cast<double>(size - 1);
    return grid;
}

void AggregateKind::validate() const {
    switch (tag) {
        case Tag::LATE:
            if (!(0.0 <= p_lo && p_lo < p_hi && p_hi <= 1.0))
                throw std::invalid_argument("LATE requires 0 <= p_lo < p_hi <= 1");
            break;
        case Tag::PRTE:
            if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("PRTE requires a in (0,1)");
            break;
        case Tag::AMTE:
            if (!(zeta > 0.0)) throw std::invalid_argument("AMTE requires zeta > 0");
            break;
        default:
            break;
    }
}

std::string AggregateKind::name() const {
    std::ostringstream os;
    switch (tag) {
        case Tag::ATE: return "ate";
        case Tag::ATT: return "att";
        case Tag::ATU: return "atu";
        case Tag::LATE: os << "late:" << p_lo << ":" << p_hi; return os.str();
        case Tag::PRTE: os << "prte:" << a; return os.str();
        case Tag::AMTE: os << "amte:" << zeta; return os.str();
    }
    return "?";
}

AggregateKind AggregateKind::parse(const std::string& text) {
    AggregateKind k;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            auto pos = s.find(':', start);
            out.push_back(s.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        return out;
    };
    const auto parts = split(text);
    const std::string& head = parts[0];
    if (head == "ate") {
        k.tag = Tag::ATE;
    } else if (head == "att") {
        k.tag = Tag::ATT;
    } else if (head == "atu") {
        k.tag = Tag::ATU;
    } else if (head == "late") {
        if (parts.size() != 3) throw std::invalid_argument("late needs the form late:p_lo:p_hi");
        k.tag = Tag::LATE;
        k.p_lo = std::stod(parts[1]);
        k.p_hi = std::stod(parts[2]);
    } else if (head == "prte") {
        if (parts.size() != 2) throw std::invalid_argument("prte needs the form prte:a");
        k.tag = Tag::PRTE;
        k.a = std::stod(parts[1]);
    } else if (head == "amte") {
        if (parts.size() != 2) throw std::invalid_argument("amte needs the form amte:zeta");
        k.tag = Tag::AMTE;
        k.zeta = std::stod(parts[1]);
    } else {
        throw std::invalid_argument("unknown aggregate '" + text + "'");
    }
    k.validate();
    return k;
}

}  // namespace mte

#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mtebounds/simulate.hpp"

using namespace mte;

namespace {

std::string tmp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

int cli(const std::string& args) {
    const std::string cmd = std::string(MTE_CLI_PATH) + " " + args + " 2>/dev/null";
    const int rc = std::system(cmd.c_str());
    return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& path, std::vector<std::string>* header) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    std::vector<std::vector<std::string>> rows;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find(',', start);
            fields.push_back(line.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (first) {
            if (header) *header = fields;
            first = false;
        } else {
            rows.push_back(fields);
        }
    }
    return rows;
}

int column(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

}  // namespace

TEST_CASE("simulate: deterministic and seedable") {
    const std::string a = tmp_file("cli_sim_a.csv");
    const std::string b = tmp_file("cli_sim_b.csv");
    const std::string c = tmp_file("cli_sim_c.csv");
    REQUIRE(cli("simulate --n 2000 --seed 42 --alpha 0.3 --rho 0 --out " + a) == 0);
    REQUIRE(cli("simulate --n 2000 --seed 42 --alpha 0.3 --rho 0 --out " + b) == 0);
    REQUIRE(cli("simulate --n 2000 --seed 43 --alpha 0.3 --rho 0 --out " + c) == 0);
    CHECK(slurp(a) == slurp(b));       // byte-identical rerun
    CHECK(slurp(a) != slurp(c));

    // MTE_SEED fallback reproduces --seed
    const std::string d = tmp_file("cli_sim_d.csv");
    const std::string cmd = std::string("MTE_SEED=42 ") + MTE_CLI_PATH +
                            " simulate --n 2000 --alpha 0.3 --rho 0 --out " + d + " 2>/dev/null";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    CHECK(slurp(a) == slurp(d));
}

TEST_CASE("simulate: latent columns agree with the reported treatment under no misclassification") {
    const std::string path = tmp_file("cli_sim_latent.csv");
    REQUIRE(cli("simulate --n 1000 --seed 9 --alpha 0 --latent --out " + path) == 0);
    std::vector<std::string> header;
    const auto rows = parse_csv(path, &header);
    const int cd = column(header, "d");
    const int cds = column(header, "dstar");
    REQUIRE(cd >= 0);
    REQUIRE(cds >= 0);
    for (const auto& r : rows)
        CHECK(r[static_cast<std::size_t>(cd)] == r[static_cast<std::size_t>(cds)]);
}

TEST_CASE("simulate: exit codes") {
    CHECK(cli("simulate --n 100 --alpha 1.5 --out " + tmp_file("x.csv")) == 2);
    CHECK(cli("simulate --n 100 --out /nonexistent-dir/x.csv") == 3);
    // unknown config key
    const std::string cfg = tmp_file("cli_bad_config.json");
    {
        std::ofstream out(cfg);
        out << R"({"dgp": {"n": 100, "frobnicate": true}})";
    }
    CHECK(cli("simulate --config " + cfg + " --out " + tmp_file("x2.csv")) == 2);
    const std::string cfg2 = tmp_file("cli_bad_config2.json");
    {
        std::ofstream out(cfg2);
        out << R"({"dpg": {}})";
    }
    CHECK(cli("simulate --config " + cfg2 + " --out " + tmp_file("x3.csv")) == 2);
    CHECK(cli("simulate --config /no/such/config.json --out " + tmp_file("x4.csv")) == 3);
}

TEST_CASE("identify: prop2 bounds on simulated data with support sentinels") {
    const std::string data = tmp_file("cli_ident_data.csv");
    REQUIRE(cli("simulate --n 30000 --seed 3 --alpha 0.3 --rho 0 --out " + data) == 0);
    const std::string out = tmp_file("cli_ident_out.csv");
    // the 0.02 grid point falls outside the reported-propensity support
    REQUIRE(cli("identify " + data + " --mode prop2 --alpha-bar 0.4 --p-grid 0.02,0.6,10 --fd-step 0.2 --out " + out) == 0);
    std::vector<std::string> header;
    const auto rows = parse_csv(out, &header);
    REQUIRE(header == std::vector<std::string>{"p", "lb", "ub", "liv"});
    CHECK(rows.size() == 10);
    CHECK(rows.front()[1] == "EMPTY");  // no cells near p = 0.02
    bool some_numeric = false;
    for (const auto& r : rows)
        if (r[1] != "EMPTY" && r[1] != "UNBOUNDED") some_numeric = true;
    CHECK(some_numeric);

    // invariance of the emitted bounds in alpha_bar, criterion-style
    const std::string out2 = tmp_file("cli_ident_out2.csv");
    REQUIRE(cli("identify " + data + " --mode prop2 --alpha-bar 1 --p-grid 0.02,0.6,10 --fd-step 0.2 --out " + out2) == 0);
    CHECK(slurp(out) == slurp(out2));
}

TEST_CASE("identify: discrete LATE on the binary worked example") {
    const std::string data = tmp_file("cli_late_data.csv");
    {
        std::ofstream out(data);
        out << "y,d,z\n";
        auto block = [&](double y, int d, double z, int count) {
            for (int i = 0; i < count; ++i) out << y << ',' << d << ',' << z << '\n';
        };
        block(0, 1, 0, 20); block(1, 1, 0, 20); block(0, 0, 0, 30); block(1, 0, 0, 30);
        block(0, 1, 1, 10); block(1, 1, 1, 39); block(2, 1, 1, 1);
        block(0, 0, 1, 35); block(1, 0, 1, 15);
    }
    const std::string out = tmp_file("cli_late_out.csv");
    REQUIRE(cli("identify " + data + " --mode discrete-late --alpha-bar 1 --out " + out) == 0);
    std::vector<std::string> header;
    const auto rows = parse_csv(out, &header);
    REQUIRE(rows.size() == 1);
    const auto& r = rows[0];
    CHECK(std::stod(r[static_cast<std::size_t>(column(header, "lb"))]) == doctest::Approx(0.06).epsilon(1e-9));
    CHECK(std::stod(r[static_cast<std::size_t>(column(header, "ub"))]) == doctest::Approx(0.20).epsilon(1e-9));
    CHECK(std::stod(r[static_cast<std::size_t>(column(header, "ura_ub"))]) == doctest::Approx(0.24).epsilon(1e-9));
    CHECK(std::stod(r[static_cast<std::size_t>(column(header, "lb_p"))]) == doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("identify: symmetric mode emits curves and summary") {
    const std::string data = tmp_file("cli_sym_data.csv");
    REQUIRE(cli("simulate --n 30000 --seed 4 --alpha 0.3 --rho 0 --out " + data) == 0);
    const std::string out = tmp_file("cli_sym_out.csv");
    const std::string curves = tmp_file("cli_sym_curves.csv");
    const std::string summary = tmp_file("cli_sym_summary.json");
    REQUIRE(cli("identify " + data + " --mode symmetric --alpha-bar 0.139 --alpha-grid 15 --bandwidth 0.1 --out " +
                out + " --curves " + curves + " --summary " + summary) == 0);
    std::vector<std::string> header;
    const auto curve_rows = parse_csv(curves, &header);
    // 15 curves on the default 21-point grid
    CHECK(curve_rows.size() == 15 * 21);
    const std::string sj = slurp(summary);
    CHECK(sj.find("\"alpha_cap\"") != std::string::npos);
    CHECK(sj.find("\"feasible_alphas\"") != std::string::npos);
    CHECK(cli("identify " + data + " --mode wat --out " + out) == 2);
    CHECK(cli("identify /no/such/file.csv --mode prop2 --out " + out) == 3);
}

TEST_CASE("estimate: exit 4 when the pipeline cannot run") {
    const std::string data = tmp_file("cli_est_bad.csv");
    {
        std::ofstream out(data);
        out << "y,d,z,x1\n";
        for (int i = 0; i < 200; ++i)
            out << (i % 7) * 0.1 << ',' << (i % 2) << ',' << i * 0.01 << ",1\n";  // constant covariate
    }
    CHECK(cli("estimate " + data + " --B 10 --seed 1 --out " + tmp_file("cli_est_bad.json")) == 4);
}

TEST_CASE("replicate: closed-form bundles") {
    const std::string dir = tmp_file("cli_replicate");
    REQUIRE(cli("replicate fig1 --out " + dir) == 0);
    REQUIRE(cli("replicate fig2 --out " + dir) == 0);
    REQUIRE(cli("replicate fig4 --out " + dir) == 0);
    CHECK(cli("replicate fig3 --out " + dir) == 2);

    std::vector<std::string> h1;
    const auto fig1 = parse_csv(dir + "/fig1.csv", &h1);
    CHECK(fig1.size() == 5 * 3 * 21);
    const int c_p = column(h1, "p");
    const int c_truth = column(h1, "truth");
    for (const auto& r : fig1) {
        const double p = std::stod(r[static_cast<std::size_t>(c_p)]);
        const double truth = std::stod(r[static_cast<std::size_t>(c_truth)]);
        CHECK(truth == doctest::Approx(true_mte(p)).epsilon(1e-12));
    }

    // misspecified panels of fig2 exclude the truth somewhere
    std::vector<std::string> h2;
    const auto fig2 = parse_csv(dir + "/fig2.csv", &h2);
    const int f2_at = column(h2, "alpha_true");
    const int f2_ab = column(h2, "alpha_bar");
    const int f2_lb = column(h2, "lb");
    const int f2_ub = column(h2, "ub");
    const int f2_p = column(h2, "p");
    const int f2_tr = column(h2, "truth");
    bool excluded = false;
    bool contained_all = true;
    for (const auto& r : fig2) {
        const double at = std::stod(r[static_cast<std::size_t>(f2_at)]);
        const double ab = std::stod(r[static_cast<std::size_t>(f2_ab)]);
        if (r[static_cast<std::size_t>(f2_lb)] == "EMPTY") {
            if (at == 0.3 && ab == 0.4) contained_all = false;
            continue;
        }
        const double lb = std::stod(r[static_cast<std::size_t>(f2_lb)]);
        const double ub = std::stod(r[static_cast<std::size_t>(f2_ub)]);
        const double truth = std::stod(r[static_cast<std::size_t>(f2_tr)]);
        (void)f2_p;
        if (at == 0.3 && ab == 0.1 && (truth < lb - 1e-9 || truth > ub + 1e-9)) excluded = true;
        if (at == 0.3 && ab == 0.4 && (truth < lb - 1e-9 || truth > ub + 1e-9)) contained_all = false;
    }
    CHECK(excluded);
    CHECK(contained_all);

    // fig4: the naive LIV misses the truth by at least 0.5 at p = 0.5, alpha = 0.3
    std::vector<std::string> h4;
    const auto fig4 = parse_csv(dir + "/fig4.csv", &h4);
    const int f4_a = column(h4, "alpha");
    const int f4_p = column(h4, "p");
    const int f4_liv = column(h4, "liv");
    const int f4_tr = column(h4, "truth");
    bool found = false;
    for (const auto& r : fig4) {
        if (std::stod(r[static_cast<std::size_t>(f4_a)]) == 0.3 &&
            std::fabs(std::stod(r[static_cast<std::size_t>(f4_p)]) - 0.5) < 1e-9) {
            found = true;
            const double liv = std::stod(r[static_cast<std::size_t>(f4_liv)]);
            const double truth = std::stod(r[static_cast<std::size_t>(f4_tr)]);
            CHECK(std::fabs(liv - truth) >= 0.5);
        }
    }
    CHECK(found);
}

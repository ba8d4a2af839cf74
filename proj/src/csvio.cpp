#include "mtebounds/csvio.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mte {

std::string format_double(double v) {
    std::array<char, 32> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        std::string field = line.substr(start, pos - start);
        while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
        while (!field.empty() && field.front() == ' ') field.erase(field.begin());
        out.push_back(field);
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("CSV: cannot parse " + what + " value '" + s + "'");
    }
}

}  // namespace

Dataset read_observations_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("CSV '" + path + "' is empty");
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "y" || header[1] != "d" || header[2] != "z")
        throw std::runtime_error("CSV '" + path + "' must start with columns y,d,z");

    Dataset ds;
    std::vector<std::size_t> x_cols;
    for (std::size_t c = 3; c < header.size(); ++c) {
        const std::string& h = header[c];
        if (h.rfind("x", 0) == 0) {
            ds.x_names.push_back(h);
            x_cols.push_back(c);
        } else if (h == "dstar" || h == "eps" || h == "v" || h == "xi" || h == "beta" || h == "u" ||
                   h == "y0" || h == "y1") {
            // latent columns are ignored on read: they are not part of the
            // econometrician's information set
        } else {
            throw std::runtime_error("CSV '" + path + "': unknown column '" + h + "'");
        }
    }

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw std::runtime_error("CSV '" + path + "' line " + std::to_string(lineno) +
                                     ": wrong field count");
        Observation ob;
        ob.y = parse_double(fields[0], "y");
        const double draw = parse_double(fields[1], "d");
        if (draw != 0.0 && draw != 1.0)
            throw std::runtime_error("CSV '" + path + "' line " + std::to_string(lineno) +
                                     ": d must be 0 or 1");
        ob.d = static_cast<int>(draw);
        ob.z = parse_double(fields[2], "z");
        if (!std::isfinite(ob.y) || !std::isfinite(ob.z))
            throw std::runtime_error("CSV '" + path + "' line " + std::to_string(lineno) +
                                     ": y and z must be finite");
        for (std::size_t c : x_cols) ob.x.push_back(parse_double(fields[c], header[c]));
        ds.obs.push_back(std::move(ob));
    }
    if (ds.obs.empty()) throw std::runtime_error("CSV '" + path + "' has no data rows");
    return ds;
}

void write_observations_csv(const std::string& path, const std::vector<Observation>& obs,
                            const std::vector<std::string>& x_names,
                            const std::vector<LatentDraw>* latent) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "y,d,z";
    for (const auto& nm : x_names) out << ',' << nm;
    if (latent) out << ",dstar,eps,v,xi,beta,u,y0,y1";
    out << '\n';
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const Observation& ob = obs[i];
        out << format_double(ob.y) << ',' << ob.d << ',' << format_double(ob.z);
        for (double xv : ob.x) out << ',' << format_double(xv);
        if (latent) {
            const LatentDraw& l = (*latent)[i];
            out << ',' << l.dstar << ',' << l.eps << ',' << format_double(l.v) << ','
                << format_double(l.xi) << ',' << format_double(l.beta) << ',' << format_double(l.u)
                << ',' << format_double(l.y0) << ',' << format_double(l.y1);
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace mte

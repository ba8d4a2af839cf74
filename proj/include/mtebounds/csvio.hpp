#pragma once

#include <string>
#include <vector>

#include "mtebounds/types.hpp"

namespace mte {

// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

struct Dataset {
    std::vector<Observation> obs;
    std::vector<std::string> x_names;
};

// Reads a y,d,z[,x*...] CSV with a header row. Unknown columns are an error.
Dataset read_observations_csv(const std::string& path);

// Writes observations; latent columns appended when latent is non-null.
void write_observations_csv(const std::string& path, const std::vector<Observation>& obs,
                            const std::vector<std::string>& x_names,
                            const std::vector<LatentDraw>* latent);

}  // namespace mte

#pragma once

#include <string>

#include "sbmot/measures.hpp"

namespace sbm {

/// Doubles in emitted JSON carry 17 significant digits so that files
/// round-trip bit-exactly.
std::string fmt17(double v);

std::string measure_to_json(const DiscreteMeasure& m);
DiscreteMeasure measure_from_json(const std::string& text);

std::string coupling_to_json(const Coupling& c);
Coupling coupling_from_json(const std::string& text);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

void save_measure(const DiscreteMeasure& m, const std::string& path);
DiscreteMeasure load_measure(const std::string& path);

}  // namespace sbm

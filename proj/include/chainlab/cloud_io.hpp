#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "chainlab/measures.hpp"

namespace chainlab {

// Point-cloud CSV: header "x0,...,x{d-1},weight", one point per row, numbers
// written with 17 significant digits so a write/read cycle is lossless.
void write_cloud_csv(std::ostream& out, const PointCloudMeasure& cloud);
void save_cloud_csv(const std::string& path, const PointCloudMeasure& cloud);
PointCloudMeasure read_cloud_csv(std::istream& in);
PointCloudMeasure load_cloud_csv(const std::string& path);

// IFS document: {"dimension": d, "maps": [{"ratio": r, "translation": [..]}, ...],
// "weights": [...]} with "weights" optional.
IfsSpec ifs_from_json(const nlohmann::json& doc);
nlohmann::json ifs_to_json(const IfsSpec& spec);
IfsSpec load_ifs_json(const std::string& path);

// Shortest round-trip-safe decimal form used by every CSV writer.
std::string format_number(double value);

}  // namespace chainlab

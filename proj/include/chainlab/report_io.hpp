#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "chainlab/chain_engine.hpp"
#include "chainlab/experiments.hpp"
#include "chainlab/fourier_probe.hpp"
#include "chainlab/measures.hpp"
#include "chainlab/spatial_index.hpp"

namespace chainlab {

// JSON views of every report. Non-finite numbers become null.
nlohmann::json to_json(const BallConditionReport& r);
nlohmann::json to_json(const DimensionEstimate& r);
nlohmann::json to_json(const ScalingReport& r);
nlohmann::json to_json(const GapScanReport& r);
nlohmann::json to_json(const EpsLadderResult& r);
nlohmann::json to_json(const DistSetReport& r);
nlohmann::json to_json(const ShellEnergyReport& r);
nlohmann::json to_json(const EnergyIntegralResult& r);
nlohmann::json to_json(const McEstimate& r);
nlohmann::json to_json(const DegenerateFraction& r);
/// Vertices as coordinate arrays, plus their cloud indices.
nlohmann::json to_json(const Chain& c, const PointCloudMeasure& cloud);
nlohmann::json index_stats(const GridIndex& index);

// Tabular series, one row per rung / grid point / shell.
std::string to_csv(const BallConditionReport& r);
std::string to_csv(const DimensionEstimate& r);
std::string to_csv(const ScalingReport& r);
std::string to_csv(const GapScanReport& r);
std::string to_csv(const EpsLadderResult& r);
std::string to_csv(const ShellEnergyReport& r);

/// index, coordinates, weight and field value per point.
void write_field_csv(std::ostream& out, const PointCloudMeasure& cloud, const DensityField& f);

/// One chain per line.
void write_chains_jsonl(std::ostream& out, const PointCloudMeasure& cloud, const std::vector<Chain>& chains);

}  // namespace chainlab

#include "chainlab/cloud_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string_view>

#include "chainlab/errors.hpp"

namespace chainlab {

std::string format_number(double value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

namespace {

std::string digits17(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

}  // namespace

void write_cloud_csv(std::ostream& out, const PointCloudMeasure& cloud) {
    const int d = cloud.dimension();
    for (int k = 0; k < d; ++k) out << 'x' << k << ',';
    out << "weight\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (const double x : cloud.point(i)) out << digits17(x) << ',';
        out << digits17(cloud.weight(i)) << '\n';
    }
}

void save_cloud_csv(const std::string& path, const PointCloudMeasure& cloud) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open cloud file for writing: " + path);
    write_cloud_csv(out, cloud);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
            field.remove_suffix(1);
        fields.push_back(field);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

double parse_number(std::string_view field, std::size_t row) {
    double value = 0.0;
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    if (!field.empty() && *begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw ValidationError("cloud csv: malformed number '" + std::string(field) + "' on row " +
                              std::to_string(row));
    return value;
}

}  // namespace

PointCloudMeasure read_cloud_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("cloud csv: missing header");
    const auto header = split_fields(line);
    require(header.size() >= 2, "cloud csv: header needs at least one coordinate and a weight column");
    const int d = static_cast<int>(header.size()) - 1;
    for (int k = 0; k < d; ++k)
        require(header[k] == "x" + std::to_string(k),
                "cloud csv: header column " + std::to_string(k) + " must be x" + std::to_string(k));
    require(header.back() == "weight", "cloud csv: last header column must be 'weight'");

    std::vector<double> coords, weights;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_fields(line);
        require(fields.size() == header.size(),
                "cloud csv: row " + std::to_string(row) + " has the wrong number of fields");
        for (int k = 0; k < d; ++k) coords.push_back(parse_number(fields[k], row));
        weights.push_back(parse_number(fields.back(), row));
    }
    return PointCloudMeasure(d, std::move(coords), std::move(weights));
}

PointCloudMeasure load_cloud_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open cloud file: " + path);
    return read_cloud_csv(in);
}

IfsSpec ifs_from_json(const nlohmann::json& doc) {
    require(doc.is_object(), "ifs json: document must be an object");
    require(doc.contains("dimension") && doc["dimension"].is_number_integer(),
            "ifs json: integer field 'dimension' is required");
    require(doc.contains("maps") && doc["maps"].is_array(), "ifs json: array field 'maps' is required");
    IfsSpec spec;
    spec.dimension = doc["dimension"].get<int>();
    for (const auto& m : doc["maps"]) {
        require(m.is_object() && m.contains("ratio") && m["ratio"].is_number() &&
                    m.contains("translation") && m["translation"].is_array(),
                "ifs json: each map needs numeric 'ratio' and array 'translation'");
        IfsMap map;
        map.ratio = m["ratio"].get<double>();
        for (const auto& v : m["translation"]) {
            require(v.is_number(), "ifs json: translation entries must be numbers");
            map.translation.push_back(v.get<double>());
        }
        spec.maps.push_back(std::move(map));
    }
    if (doc.contains("weights") && !doc["weights"].is_null()) {
        require(doc["weights"].is_array(), "ifs json: 'weights' must be an array");
        for (const auto& w : doc["weights"]) {
            require(w.is_number(), "ifs json: weights must be numbers");
            spec.weights.push_back(w.get<double>());
        }
    }
    spec.validate();
    return spec;
}

nlohmann::json ifs_to_json(const IfsSpec& spec) {
    nlohmann::json doc;
    doc["dimension"] = spec.dimension;
    doc["maps"] = nlohmann::json::array();
    for (const auto& m : spec.maps) doc["maps"].push_back({{"ratio", m.ratio}, {"translation", m.translation}});
    if (!spec.weights.empty()) doc["weights"] = spec.weights;
    return doc;
}

IfsSpec load_ifs_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open ifs file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("ifs json: " + std::string(e.what()));
    }
    return ifs_from_json(doc);
}

}  // namespace chainlab

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "comfed/data.hpp"
#include "comfed/error.hpp"

namespace comfed {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.pop_back();
        std::size_t start = field.find_first_not_of(' ');
        fields.push_back(start == std::string::npos ? std::string{} : field.substr(start));
    }
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_number(const std::string& text, std::size_t line_no, const std::string& column) {
    double value = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (text.empty() || ec != std::errc() || ptr != last) {
        throw IngestionError("line " + std::to_string(line_no) + ": column '" + column + "' is not numeric: '" +
                             text + "'");
    }
    if (!std::isfinite(value)) {
        throw IngestionError("line " + std::to_string(line_no) + ": column '" + column + "' is not finite: '" +
                             text + "'");
    }
    return value;
}

}  // namespace

ClientDataset parse_csv(std::istream& in, const CsvSchema& schema, double test_fraction, std::uint64_t seed) {
    std::string line;
    if (!std::getline(in, line)) throw IngestionError("line 1: missing header");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const auto header = split_fields(line);

    std::map<std::string, std::size_t> column_of;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (!column_of.emplace(header[c], c).second) throw IngestionError("line 1: duplicate column '" + header[c] + "'");
    }
    if (!column_of.count(schema.label_column)) throw IngestionError("line 1: missing label column '" + schema.label_column + "'");

    std::size_t expected_columns = 1;
    std::vector<std::vector<std::size_t>> feature_cols;
    for (const auto& m : schema.modalities) {
        std::vector<std::size_t> cols;
        for (std::size_t d = 0; d < m.input_dim; ++d) {
            const std::string name = m.name + "_" + std::to_string(d);
            auto it = column_of.find(name);
            if (it == column_of.end()) throw IngestionError("line 1: missing column '" + name + "'");
            cols.push_back(it->second);
        }
        expected_columns += m.input_dim;
        feature_cols.push_back(std::move(cols));
    }
    if (header.size() != expected_columns) {
        throw IngestionError("line 1: header has " + std::to_string(header.size()) + " columns, schema declares " +
                             std::to_string(expected_columns));
    }

    const std::size_t label_col = column_of.at(schema.label_column);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw IngestionError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                 " fields, found " + std::to_string(fields.size()));
        }
        const double label = parse_number(fields[label_col], line_no, schema.label_column);
        if (label != std::floor(label) || label < 0 || label >= static_cast<double>(schema.num_classes)) {
            throw IngestionError("line " + std::to_string(line_no) + ": unknown label '" + fields[label_col] + "'");
        }
        labels.push_back(static_cast<int>(label));
        std::vector<double> values;
        for (std::size_t k = 0; k < schema.modalities.size(); ++k) {
            for (std::size_t d = 0; d < feature_cols[k].size(); ++d) {
                values.push_back(parse_number(fields[feature_cols[k][d]], line_no, header[feature_cols[k][d]]));
            }
        }
        rows.push_back(std::move(values));
    }

    ClientDataset data;
    data.labels = std::move(labels);
    std::size_t offset = 0;
    for (const auto& m : schema.modalities) {
        data.modalities.push_back(m.name);
        Matrix feat(rows.size(), m.input_dim);
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t d = 0; d < m.input_dim; ++d) feat(r, d) = rows[r][offset + d];
        offset += m.input_dim;
        data.features.emplace(m.name, std::move(feat));
    }
    std::mt19937_64 rng(seed);
    split_train_test(data, test_fraction, rng);
    return data;
}

ClientDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema, double test_fraction,
                       std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open '" + path.string() + "'");
    return parse_csv(in, schema, test_fraction, seed);
}

void write_csv(std::ostream& out, const ClientDataset& data, const CsvSchema& schema) {
    out << schema.label_column;
    for (const auto& m : schema.modalities) {
        if (!data.features.count(m.name)) throw ModalityError("dataset lacks modality '" + m.name + "'");
        for (std::size_t d = 0; d < m.input_dim; ++d) out << ',' << m.name << '_' << d;
    }
    out << '\n';
    out << std::setprecision(9);
    for (std::size_t r = 0; r < data.size(); ++r) {
        out << data.labels[r];
        for (const auto& m : schema.modalities) {
            for (double v : data.features.at(m.name).row(r)) out << ',' << static_cast<float>(v);
        }
        out << '\n';
    }
}

}  // namespace comfed

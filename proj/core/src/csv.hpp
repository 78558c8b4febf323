#ifndef CELLCONTRAST_SRC_CSV_HPP
#define CELLCONTRAST_SRC_CSV_HPP

#include <string>
#include <string_view>
#include <vector>

#include "cellcontrast/errors.hpp"

// Minimal unquoted CSV: fields may not contain commas or newlines.
namespace cellcontrast::csv {

inline std::vector<std::string> split(std::string_view line) {
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            return out;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline const std::string& checked_field(const std::string& value, std::string_view column) {
    if (value.find_first_of(",\n\r") != std::string::npos) {
        throw IoError("value '" + value + "' for column " + std::string(column) + " contains a comma or newline");
    }
    return value;
}

}

#endif

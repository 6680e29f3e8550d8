/*
 Copyright 2026 The ddpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef DDPC_CSV_HPP
#define DDPC_CSV_HPP

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ddpc::harness {

/// Plain comma separated table. Fields never contain commas or quotes.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws if absent.
    std::size_t column(std::string_view name) const;
    double number(std::size_t row, std::size_t col) const;
};

/// 17 significant digits, round-trips exactly.
std::string format_number(double x);
double parse_number(std::string_view text);

std::string to_csv(const CsvTable& table);
CsvTable parse_csv(std::string_view text);

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace ddpc::harness

#endif  // DDPC_CSV_HPP

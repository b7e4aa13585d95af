// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace vicl {

// A named-row numeric table, e.g. ablation variants x folds.
struct Table {
    struct Row {
        std::string name;
        std::vector<double> values;
    };

    std::string title;
    std::string row_header = "model";
    std::vector<std::string> columns;
    std::vector<Row> rows;

    void add_row(std::string name, std::vector<double> values);
    const Row& row(const std::string& name) const;
    bool has_row(const std::string& name) const;

    // Lossless: values are written in shortest round-trip form.
    std::string to_csv() const;
    static Table from_csv(const std::string& text, std::string title = "");
    // Values scaled by `scale` and printed with `digits` decimals.
    std::string to_markdown(double scale = 100.0, int digits = 2) const;
};

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

double mean_of(const std::vector<double>& v);

} // namespace vicl

#pragma once

#include <filesystem>
#include <string>

#include "pmnc/grid.hpp"
#include "pmnc/synthetic.hpp"

namespace pmnc_test {

/// Mini-grid windows used across tests (4-degree synthetic grid, 46x90):
/// 16x16 input window, centered 8x8 output window.
inline pmnc::DomainSpec mini_input_spec() { return {62.0, 2.0, 40.0, 100.0}; }
inline pmnc::DomainSpec mini_output_spec() { return {46.0, 18.0, 56.0, 84.0}; }

inline std::filesystem::path fresh_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / "pmnc_tests" / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace pmnc_test

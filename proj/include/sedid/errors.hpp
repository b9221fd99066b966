#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sedid {

// Malformed archive / config file. Message names the byte offset or key.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Training loss became non-finite; `step` is the step (or epoch) index.
struct TrainingDiverged : std::runtime_error {
    size_t step;
    TrainingDiverged(const std::string& what, size_t step_index)
        : std::runtime_error(what), step(step_index) {}
};

// Sampler state became non-finite at timestep `t`.
struct SamplerDiverged : std::runtime_error {
    int t;
    SamplerDiverged(const std::string& what, int timestep)
        : std::runtime_error(what), t(timestep) {}
};

// Calibration input contains only one class.
struct DegenerateCalibration : std::runtime_error {
    explicit DegenerateCalibration(const std::string& what) : std::runtime_error(what) {}
};

// Metric is undefined for the given score set (single class).
struct UndefinedMetric : std::runtime_error {
    explicit UndefinedMetric(const std::string& what) : std::runtime_error(what) {}
};

// Predictor evaluated at a timestep where it is singular (e.g. point mass at t=0).
struct UndefinedTimestep : std::runtime_error {
    explicit UndefinedTimestep(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sedid

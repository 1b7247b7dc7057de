#pragma once

#include <string>

#include "bcap/model.hpp"

namespace bcap {

// Long-format CSV intake. signals: header subject,t,y1..yp with t contiguous
// from 1 per subject; covariates: header subject,x1..xq. Every signal
// subject must appear in the covariate file. add_intercept prepends a ones
// column to x. ParseError messages carry file and line.
TimeSeriesDataset load(const std::string& signals_path,
                       const std::string& covariates_path, bool add_intercept);

// Inverse of load (17-significant-digit CSV; bit-exact round trip).
// drop_leading_covariate skips column 1 of x on output (used when the
// in-memory dataset carries an intercept the file should not).
void write_dataset(const TimeSeriesDataset& data,
                   const std::string& signals_path,
                   const std::string& covariates_path,
                   bool drop_leading_covariate = false);

// min over subjects i and coordinates j of T_i / tau_ij, where tau is the
// integrated autocorrelation time truncated at the first nonpositive sample
// autocorrelation; floored, at least 1. DegenerateError naming (subject,
// coordinate) on a constant series. Requires T_i >= 4.
int effective_sample_size(const TimeSeriesDataset& data);

// Keep target_T evenly strided rows per subject (stride = floor(T_i /
// target_T), starting at the first row), then remove per-subject means.
// ArgumentError when target_T exceeds some T_i.
TimeSeriesDataset thin(const TimeSeriesDataset& data, int target_T);

}  // namespace bcap

#pragma once

#include "hashconv/cnn_ops.hpp"

namespace hashconv::serial {

// Single-threaded reference kernels, written as the straight task loop (one
// logical task per channel x output hash slot, gather) and the scatter loop
// for the adjoint. Tests and the kernel benchmark compare these against the
// OpenMP implementations: hash2col/max_pool/avg_pool must match bit-exactly;
// col2hash accumulates in scatter order, so it matches up to FP reassociation.
FeatureMatrix hash2col_ref(const SuperPsh& input, const FeatureMatrix& input_data,
                           const SuperPsh& output, const ConvSpec& spec);

FeatureMatrix col2hash_ref(const FeatureMatrix& col_grads, const SuperPsh& input,
                           const SuperPsh& output, const ConvSpec& spec);

MaxPoolResult<float> max_pool_ref(const SuperPsh& input, const FeatureMatrix& input_data,
                                  const SuperPsh& output, const ConvSpec& spec);

FeatureMatrix avg_pool_ref(const SuperPsh& input, const FeatureMatrix& input_data,
                           const SuperPsh& output, const ConvSpec& spec);

}  // namespace hashconv::serial

#pragma once

#include <string>

#include "dsmt/tensor.hpp"

namespace dsmt {

// Minimal NIfTI-1 volume reader (.nii and .nii.gz, single-file variant).
// Supports uint8/int16/uint16/int32/float32/float64 voxels, byte-swapped
// headers, and scl_slope/scl_inter intensity scaling. 4-D files with a
// single trailing volume are accepted.
Tensor read_nifti(const std::string& path);

// Tiny float32 writer used to produce fixtures and exchange volumes.
void write_nifti(const std::string& path, const Tensor& volume);

bool has_nifti_extension(const std::string& path);

}  // namespace dsmt

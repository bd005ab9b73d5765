#ifndef ATLAS_IMAGES_HPP
#define ATLAS_IMAGES_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "atlas/tensor.hpp"
#include "atlas/vit.hpp"

namespace atlas {

// Images are channels x height x width tensors with values in [0, 1].

/// Binary PPM (P6, maxval 255), mapped to [0,1] by v / 255.
Tensor read_ppm(std::istream& in);
/// Writes round(clamp(v, 0, 1) * 255). Requires 1 or 3 channels.
void write_ppm(std::ostream& out, const Tensor& image);

/// Loads a P6 PPM or an EMAT tensor (detected from the magic bytes).
Tensor load_image(const std::filesystem::path& path);
/// Writes PPM for a .ppm extension, EMAT otherwise.
void save_image(const Tensor& image, const std::filesystem::path& path);

/// Validates an image tensor against the model and flattens it.
Vector image_to_input(const Tensor& image, const VitConfig& config);
Tensor input_to_image(const Vector& x, const VitConfig& config);

enum class PatternClass { Stripes, Checkers, Disks };

std::string to_string(PatternClass c);
PatternClass pattern_from_string(const std::string& name);

/// Seeded geometric test image: stripes, checkerboards or concentric disks
/// with class-specific spatial frequency, random phase/orientation/colors and
/// mild noise. Values stay inside [0.1, 0.9] so small perturbations in either
/// direction remain in the valid domain.
Vector synthetic_image(PatternClass pattern, std::uint64_t seed, const VitConfig& config);

} // namespace atlas

#endif // ATLAS_IMAGES_HPP

#pragma once

#include "meshstitch/imaging.hpp"

#include <string>

namespace meshstitch {

/// Load an 8-bit PNG or JPEG (by content, not extension). Gray stays
/// single-channel, color becomes 3-channel RGB; values map to [0,1] as v/255.
RasterImage load_image(const std::string& path);

/// Save as PNG or JPEG depending on extension (.png / .jpg / .jpeg),
/// quantizing with round(v*255) clamped to [0,255].
void save_image(const std::string& path, const RasterImage& img);

/// Mask helpers: stored as an 8-bit gray PNG with 0 = invalid, 255 = valid.
void save_mask(const std::string& path, const Mask& mask);
Mask load_mask(const std::string& path);

}  // namespace meshstitch

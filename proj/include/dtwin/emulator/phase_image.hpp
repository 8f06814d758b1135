#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dtwin::emu {

// JPEG placeholder for the camera panel: the given text lines drawn on a
// dark background. Unsupported characters render as blanks.
std::vector<std::uint8_t> render_text_jpeg(const std::vector<std::string>& lines, int width = 320,
                                           int height = 240);

}  // namespace dtwin::emu

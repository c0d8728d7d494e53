#pragma once

#define ORDICC_VERSION_MAJOR 0
#define ORDICC_VERSION_MINOR 1
#define ORDICC_VERSION_PATCH 0
#define ORDICC_VERSION_STRING "0.1.0"

namespace ordicc {
inline const char* version() { return ORDICC_VERSION_STRING; }
}  // namespace ordicc

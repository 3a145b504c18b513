#ifndef FDF_VERSION_HPP
#define FDF_VERSION_HPP

namespace fdf {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kCheckpointFormatVersion = 1;

}  // namespace fdf

#endif

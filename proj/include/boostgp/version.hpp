#pragma once

namespace boostgp {

#ifndef BOOSTGP_VERSION_STRING
#define BOOSTGP_VERSION_STRING "0.1.0"
#endif

inline constexpr const char* version() { return BOOSTGP_VERSION_STRING; }

/// Version tag written into trace files; bumped on any format change.
inline constexpr const char* trace_format_version() { return "boostgp-trace v1"; }

} // namespace boostgp

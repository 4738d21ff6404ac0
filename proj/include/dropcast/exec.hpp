#pragma once

namespace dropcast {

// Selects the serial reference kernel or the OpenMP kernel. Both produce
// bit-identical results; the serial path exists for testing and benchmarks.
enum class Exec { serial, parallel };

}  // namespace dropcast

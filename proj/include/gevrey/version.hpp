#pragma once

namespace gevrey {
inline constexpr const char* version = "0.1.0";
}

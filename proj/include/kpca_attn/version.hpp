#pragma once

namespace kpca_attn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace kpca_attn

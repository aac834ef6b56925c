// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace jgseg {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace jgseg

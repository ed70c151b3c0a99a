/*
 * Copyright (c) 2026 The unilabel Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

namespace unilabel {

enum class Modality : std::uint8_t { kAcoustic = 0, kVisual = 1, kLanguage = 2 };

inline constexpr std::array<Modality, 3> kModalities{Modality::kAcoustic, Modality::kVisual,
                                                     Modality::kLanguage};

template <typename T>
using PerModality = std::array<T, 3>;

constexpr std::size_t index(Modality m) noexcept { return static_cast<std::size_t>(m); }

inline const char* short_name(Modality m) noexcept {
  switch (m) {
    case Modality::kAcoustic:
      return "a";
    case Modality::kVisual:
      return "v";
    case Modality::kLanguage:
      return "l";
  }
  return "?";
}

/// Independent generator for (seed, keys...). Same inputs, same stream.
inline std::mt19937_64 substream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  for (auto k : keys) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace unilabel

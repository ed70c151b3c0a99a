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

// Corrected unimodal labels produced by the label-correction stage.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unilabel/modality.hpp"

namespace unilabel {

struct LabelRow {
  double y = 0.0;
  PerModality<double> corrected{};  // indexed by Modality
};

/// One row per training sample, keyed by sample id.
class LabelStore {
 public:
  void set(long long id, LabelRow row);
  bool contains(long long id) const { return rows_.count(id) != 0; }
  /// Throws MissingLabel.
  const LabelRow& at(long long id) const;
  std::size_t size() const noexcept { return rows_.size(); }
  const std::map<long long, LabelRow>& rows() const noexcept { return rows_; }

  /// Corrected labels for `ids` in order; throws MissingLabel.
  std::vector<double> gather(std::span<const long long> ids, Modality m) const;

  bool operator==(const LabelStore& other) const;

 private:
  std::map<long long, LabelRow> rows_;
};

/// Header `id,y,y_lc,y_ac,y_vc`, 17 significant digits, sorted by id.
std::string label_csv(const LabelStore& store);
LabelStore parse_label_csv(std::string_view text);
void save_labels(const std::filesystem::path& path, const LabelStore& store);
LabelStore load_labels(const std::filesystem::path& path);

}  // namespace unilabel

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

#include "unilabel/labels.hpp"

#include "unilabel/errors.hpp"
#include "unilabel/io.hpp"

namespace unilabel {

void LabelStore::set(long long id, LabelRow row) { rows_[id] = row; }

const LabelRow& LabelStore::at(long long id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) throw MissingLabel(id);
  return it->second;
}

std::vector<double> LabelStore::gather(std::span<const long long> ids, Modality m) const {
  std::vector<double> out;
  out.reserve(ids.size());
  for (long long id : ids) out.push_back(at(id).corrected[index(m)]);
  return out;
}

bool LabelStore::operator==(const LabelStore& other) const {
  if (rows_.size() != other.rows_.size()) return false;
  auto a = rows_.begin();
  auto b = other.rows_.begin();
  for (; a != rows_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.y != b->second.y ||
        a->second.corrected != b->second.corrected) {
      return false;
    }
  }
  return true;
}

namespace {
constexpr const char* kHeader = "id,y,y_lc,y_ac,y_vc";
}

std::string label_csv(const LabelStore& store) {
  std::string out = kHeader;
  out += '\n';
  for (const auto& [id, row] : store.rows()) {
    out += std::to_string(id);
    out += ',' + io::format_double(row.y);
    out += ',' + io::format_double(row.corrected[index(Modality::kLanguage)]);
    out += ',' + io::format_double(row.corrected[index(Modality::kAcoustic)]);
    out += ',' + io::format_double(row.corrected[index(Modality::kVisual)]);
    out += '\n';
  }
  return out;
}

LabelStore parse_label_csv(std::string_view text) {
  LabelStore store;
  std::size_t line_no = 0;
  bool header_seen = false;
  for (std::string_view raw : io::split(text, '\n')) {
    ++line_no;
    const std::string_view line = io::trim(raw);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kHeader) throw ParseError(line_no, "expected header '" + std::string(kHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto fields = io::split(line, ',');
    if (fields.size() != 5) throw ParseError(line_no, "expected 5 fields");
    try {
      const long long id = io::parse_int(fields[0]);
      if (store.contains(id)) throw ParseError(line_no, "duplicate id " + std::to_string(id));
      LabelRow row;
      row.y = io::parse_double(fields[1]);
      row.corrected[index(Modality::kLanguage)] = io::parse_double(fields[2]);
      row.corrected[index(Modality::kAcoustic)] = io::parse_double(fields[3]);
      row.corrected[index(Modality::kVisual)] = io::parse_double(fields[4]);
      store.set(id, row);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (!header_seen) throw ParseError(1, "empty label file");
  return store;
}

void save_labels(const std::filesystem::path& path, const LabelStore& store) {
  io::write_file_atomic(path, label_csv(store));
}

LabelStore load_labels(const std::filesystem::path& path) {
  return parse_label_csv(io::read_file(path));
}

}  // namespace unilabel

// Copyright 2026 The hflow Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef HFLOW_SEQUENCE_TYPES_H_
#define HFLOW_SEQUENCE_TYPES_H_

#include <cstddef>
#include <vector>

#include "hflow/numerics.h"

namespace hflow {

// Frames x bands energy array standing in for a mel-spectrogram. Row t is
// frame t.
using MelGram = Matrix;

struct PhonemeSequence {
  std::vector<int> ids;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }

  // Throws std::invalid_argument if empty or any id is outside [0, vocab).
  void validate(std::size_t vocab) const;

  friend bool operator==(const PhonemeSequence&,
                         const PhonemeSequence&) = default;
};

}  // namespace hflow

#endif  // HFLOW_SEQUENCE_TYPES_H_

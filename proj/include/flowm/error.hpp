// Copyright 2026 The FloWM Authors
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

#ifndef FLOWM_ERROR_HPP_
#define FLOWM_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace flowm {

// Base of every error thrown by the library. The C API maps each subclass
// onto a distinct status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents or channel counts that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values, unknown keys, malformed config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures (open, read, write, rename).
class IoError : public Error {
 public:
  using Error::Error;
};

// Wrong magic bytes or unsupported version in a binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A binary file that ends before its declared payload does.
class TruncatedError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowm

#endif  // FLOWM_ERROR_HPP_

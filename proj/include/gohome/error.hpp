// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gohome {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedMapError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class InputError : public Error { using Error::Error; };
class EncodeError : public Error { using Error::Error; };
class GridAlignmentError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };

/// Raised while decoding a scene or checkpoint document. `where()` holds a
/// JSON-pointer-style location such as "/agents/2/track".
class ParseError : public Error {
 public:
  ParseError(std::string where, const std::string& what)
      : Error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

}  // namespace gohome

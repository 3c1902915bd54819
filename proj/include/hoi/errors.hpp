// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hoi {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateRotation : public Error {
 public:
  using Error::Error;
};

class NotARotation : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Raised by the training loop when a loss turns non-finite.
class NaNLoss : public Error {
 public:
  NaNLoss(int stage, long step)
      : Error("non-finite loss at stage " + std::to_string(stage) + " step " +
              std::to_string(step)),
        stage_(stage),
        step_(step) {}

  int stage() const { return stage_; }
  long step() const { return step_; }

 private:
  int stage_;
  long step_;
};

}  // namespace hoi

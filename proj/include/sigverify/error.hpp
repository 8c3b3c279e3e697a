// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace sigverify {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: violated precondition, malformed file content, infeasible counts.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Zero-norm embedding; cosine similarity is undefined for it.
class DegenerateEmbedding : public Error {
 public:
  explicit DegenerateEmbedding(const std::string& what)
      : Error("degenerate embedding: " + what) {}
};

/// Checkpoint cannot be loaded (missing files, hash mismatch, shape mismatch).
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Invariant breach inside the library. Indicates a bug, not bad input.
class InternalError : public Error {
 public:
  using Error::Error;
};

/// A vote for (rater, pair) already exists.
class ConflictError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace sigverify

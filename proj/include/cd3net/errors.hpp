#pragma once

#include <stdexcept>
#include <string>

namespace cd3net {

/// Base of all library exceptions. The category drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  enum class Category { invalid_argument, data, numerical };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error(Category::invalid_argument, what) {}
};

/// Base for problems with input data (files, formats, contents).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(Category::data, what) {}
};

class UnsupportedFormat : public DataError {
 public:
  explicit UnsupportedFormat(const std::string& what) : DataError(what) {}
};

class IoError : public DataError {
 public:
  explicit IoError(const std::string& what) : DataError(what) {}
};

class NotFound : public DataError {
 public:
  explicit NotFound(const std::string& what) : DataError(what) {}
};

class InvalidData : public DataError {
 public:
  explicit InvalidData(const std::string& what) : DataError(what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(Category::numerical, what) {}
};

}  // namespace cd3net

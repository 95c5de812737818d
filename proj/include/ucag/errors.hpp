#pragma once

#include <stdexcept>
#include <string>

namespace ucag {

/// Precondition or argument violation.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Weight file failed its structural or checksum validation.
class CorruptModel : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedVersion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed image or mask file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A syntactically valid file in a format we do not read (e.g. ASCII "P3").
class UnsupportedFormat : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Map density with an all-zero (or all-one) mask has a zero normaliser.
class UndefinedDensity : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

/// Runs `fn`; library errors escaping it are rethrown with the same type and
/// `tag + ": "` prepended to the message.
template <typename Fn>
decltype(auto) with_context(const std::string& tag, Fn&& fn) {
  try {
    return fn();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(tag + ": " + e.what());
  } catch (const UndefinedDensity& e) {
    throw UndefinedDensity(tag + ": " + e.what());
  } catch (const CorruptModel& e) {
    throw CorruptModel(tag + ": " + e.what());
  } catch (const UnsupportedVersion& e) {
    throw UnsupportedVersion(tag + ": " + e.what());
  } catch (const UnsupportedFormat& e) {
    throw UnsupportedFormat(tag + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(tag + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(tag + ": " + e.what());
  }
}

}  // namespace ucag

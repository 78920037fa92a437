#pragma once

#include <stdexcept>
#include <string>

namespace marss2l {

// Every failure surfaced by the library derives from Error so callers can
// catch one type at the pipeline boundary and still discriminate below it.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : Error { using Error::Error; };
struct IntegrityError : Error { using Error::Error; };
struct ArgumentError : Error { using Error::Error; };
struct InsufficientDataError : Error { using Error::Error; };
struct NoReferenceError : Error { using Error::Error; };
struct ExtrapolationError : Error { using Error::Error; };
struct ConstructionError : Error { using Error::Error; };
struct FitError : Error { using Error::Error; };
struct DivergenceError : Error { using Error::Error; };

// alert-service
struct NotFoundError : Error { using Error::Error; };
struct ConflictError : Error { using Error::Error; };
struct GuardError : Error { using Error::Error; };
struct RegistryError : Error { using Error::Error; };

}  // namespace marss2l

#include "carbonedge/error.hpp"

namespace carbonedge {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kSchema: return "schema error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kPrecondition: return "precondition error";
  }
  return "error";
}

}  // namespace carbonedge

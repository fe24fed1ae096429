#ifndef FUNQUE_ERROR_H_
#define FUNQUE_ERROR_H_

#include <stdexcept>
#include <string>

namespace funque {

// Single exception type for every contract violation and I/O failure in the
// library. Messages are meant to be shown to the user as-is.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace funque

#endif  // FUNQUE_ERROR_H_

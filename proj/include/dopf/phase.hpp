#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "dopf/errors.hpp"

namespace dopf {

enum class Phase : uint8_t { a = 0, b = 1, c = 2 };

inline char phase_char(Phase p) { return "abc"[static_cast<int>(p)]; }
inline int phase_index(Phase p) { return static_cast<int>(p); }

// Nonempty subset of {a,b,c}. Default-constructed sets are empty and only
// legal as a transient before parse/add.
class PhaseSet {
 public:
  PhaseSet() = default;

  static PhaseSet parse(std::string_view text) {
    PhaseSet s;
    for (char ch : text) {
      if (ch == 'a')
        s.bits_ |= 1;
      else if (ch == 'b')
        s.bits_ |= 2;
      else if (ch == 'c')
        s.bits_ |= 4;
      else
        throw Error(Err::ParseError, "bad phase token '" + std::string(text) + "'");
    }
    if (s.empty()) throw Error(Err::ParseError, "empty phase set");
    return s;
  }

  static PhaseSet all() { return parse("abc"); }
  static PhaseSet single(Phase p) {
    PhaseSet s;
    s.add(p);
    return s;
  }

  bool has(Phase p) const { return bits_ & (1u << static_cast<int>(p)); }
  void add(Phase p) { bits_ |= (1u << static_cast<int>(p)); }
  bool empty() const { return bits_ == 0; }
  int count() const { return (bits_ & 1) + ((bits_ >> 1) & 1) + ((bits_ >> 2) & 1); }
  bool subset_of(PhaseSet o) const { return (bits_ & ~o.bits_) == 0; }

  std::string str() const {
    std::string s;
    for (int i = 0; i < 3; ++i)
      if (bits_ & (1u << i)) s.push_back("abc"[i]);
    return s;
  }

  template <class F>
  void for_each(F f) const {
    for (int i = 0; i < 3; ++i)
      if (bits_ & (1u << i)) f(static_cast<Phase>(i));
  }

  bool operator==(const PhaseSet&) const = default;

 private:
  uint8_t bits_ = 0;
};

}  // namespace dopf

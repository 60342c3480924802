#ifndef EMBEDLAB_VERSION_HPP
#define EMBEDLAB_VERSION_HPP

namespace embedlab {

inline const char* version_string() { return "0.1.0"; }

} // namespace embedlab

#endif

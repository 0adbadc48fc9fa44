#include <pybind11/pybind11.h>

PYBIND11_MODULE(pyevolgym, m) { m.doc() = "evolgym bindings"; }

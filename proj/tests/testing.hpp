#pragma once

// libtorch's logging header defines CHECK; doctest owns it in tests.
#include <torch/torch.h>
#undef CHECK
#include "doctest.h"

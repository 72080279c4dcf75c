#pragma once

// Umbrella header: analytic infinite-width kernels for deep fully-connected
// networks, their sparsified/diagonal approximations, and a classical
// emulation of the quantum training pipeline with its measurement-cost model.

#include "qntk/activation.hpp"
#include "qntk/approx.hpp"
#include "qntk/data.hpp"
#include "qntk/io.hpp"
#include "qntk/kernel.hpp"
#include "qntk/linalg.hpp"
#include "qntk/ntk.hpp"
#include "qntk/parallel.hpp"
#include "qntk/qsim.hpp"
#include "qntk/quadrature.hpp"
#include "qntk/regression.hpp"
#include "qntk/rng.hpp"
#include "qntk/sparsity.hpp"
